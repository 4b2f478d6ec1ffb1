"""
Iteration engines. Every engine returns an IterateTrace.
"""

import logging
from typing import Optional

import numpy as np

from broxopt.exceptions import MethodError, OracleError
from broxopt.oracles import (
    BroxOracle,
    OracleFn,
    brox_pwl1d,
    brox_quadratic,
    breg_brox,
    prox,
    prox_p,
    prox_p_residual,
)
from broxopt.problems import (
    AffineSet,
    BregmanGenerator,
    FiniteSumProblem,
    IntervalUnion,
    MinimizerSet,
    ObjectiveProblem,
    PiecewiseLinear1D,
    PointLike,
    QuadraticProblem,
    as_point,
)
from broxopt.schedules import RadiusSchedule
from broxopt.trace import IterateTrace
from broxopt.types import (
    EquivalenceReport,
    ScheduleKind,
    SelectionRule,
    StopRule,
    TerminationReason,
    Verdict,
)

logger = logging.getLogger(__name__)

# Normalized GD and the linearization brox must agree to this relative precision
_LINEARIZATION_TOL = 1e-12
_MODEL_BROX_TOL = 1e-10
_PTH_IDENTITY_TOL = 1e-8


def _grad_norm(problem: ObjectiveProblem, x: np.ndarray) -> Optional[float]:
    if not problem.differentiable:
        return None
    return float(np.linalg.norm(problem.gradient(x)))


def _optimal_enough(problem: ObjectiveProblem, f_value: float, stop: StopRule) -> bool:
    """Whether a fixed point counts as reaching the optimum."""
    f_star = problem.f_star
    if f_star is None:
        return True
    return f_value - f_star <= max(stop.f_tol, 1e-6 * (1.0 + abs(f_star)))


def _start(
    method: str, problem: ObjectiveProblem, x0: PointLike, seed: int = 0, **info: object
) -> tuple[IterateTrace, np.ndarray, float]:
    x = as_point(x0, problem.dimension)
    fx = problem.value(x)
    trace = IterateTrace(method, problem.dimension, seed=seed, info={"problem": problem.name, **info})
    trace.start(x, fx, problem.distance_to_optimum(x))
    logger.info("%s started on %s at f=%.12g", method, problem.name, fx)
    return trace, x, fx


def _finish(trace: IterateTrace, reason: TerminationReason) -> IterateTrace:
    trace.finish(reason)
    logger.info(
        "%s finished after %d steps: %s (f=%.12g)",
        trace.method,
        trace.num_steps,
        reason.value,
        trace.final.f,
    )
    return trace


def run_bpm(
    problem: ObjectiveProblem,
    x0: PointLike,
    schedule: RadiusSchedule,
    stop: Optional[StopRule] = None,
    oracle: Optional[OracleFn] = None,
    selection: SelectionRule = SelectionRule.LEXICOGRAPHIC,
    seed: int = 0,
) -> IterateTrace:
    """
    Ball-proximal point method x_{k+1} in brox_{t_k}(x_k).

    Args:
        problem: Objective.
        x0: Starting point.
        schedule: Radius rule; ``pth_order`` schedules delegate to run_bpm_pth.
        stop: Stopping rule.
        oracle: Broximal oracle; defaults to a BroxOracle for the problem class.
        selection: Rule picking one point of a set-valued broximal output.
        seed: Recorded on the trace.

    Returns:
        The iterate trace.

    Raises:
        MethodError: An oracle failed; the trace so far is attached.
    """
    stop = stop or StopRule()
    if schedule.kind == ScheduleKind.PTH_ORDER:
        return run_bpm_pth(problem, x0, schedule.gamma, schedule.p_order, stop)
    oracle = oracle or BroxOracle()
    trace, x, fx = _start("bpm", problem, x0, seed, schedule=schedule.to_dict())
    reason = TerminationReason.MAX_ITER

    for k in range(stop.max_iter):
        if stop.reached_optimum(fx, problem.f_star):
            reason = TerminationReason.OPTIMUM_REACHED
            break
        try:
            t = schedule.radius(k, x, problem)
            result = oracle(problem, x, t)
        except (OracleError, MethodError) as exc:
            raise MethodError(f"bpm step {k} failed: {exc}", partial_trace=trace) from exc
        u, c = result.select(x, selection)
        step = float(np.linalg.norm(u - x))
        if stop.is_fixed_point(step, x, c):
            reason = (
                TerminationReason.OPTIMUM_REACHED
                if _optimal_enough(problem, fx, stop)
                else TerminationReason.STALLED
            )
            break
        fu = problem.value(u)
        trace.add_step(
            u,
            fu,
            t=t,
            step_len=step,
            c=c,
            grad_norm_next=_grad_norm(problem, u),
            dist_next=problem.distance_to_optimum(u),
            residual=result.residual,
            extras={"set_size": float(len(result.points))},
        )
        logger.debug("bpm k=%d t=%.6g step=%.6g c=%.6g f=%.12g", k, t, step, c, fu)
        x, fx = u, fu
    else:
        if stop.reached_optimum(fx, problem.f_star):
            reason = TerminationReason.OPTIMUM_REACHED
    return _finish(trace, reason)


def run_normalized_gd(
    problem: ObjectiveProblem,
    x0: PointLike,
    schedule: RadiusSchedule,
    stop: Optional[StopRule] = None,
) -> IterateTrace:
    """
    Linearized BPM: x_{k+1} = x_k - t_k grad f(x_k) / ||grad f(x_k)||.

    Each step is also computed as the broximal point of the linearization
    at x_k and the two must agree to 1e-12 relative.
    """
    stop = stop or StopRule()
    if not problem.differentiable:
        raise MethodError("normalized gradient descent needs a differentiable problem")
    trace, x, fx = _start("normalized_gd", problem, x0, schedule=schedule.to_dict())
    reason = TerminationReason.MAX_ITER

    for k in range(stop.max_iter):
        if stop.reached_optimum(fx, problem.f_star):
            reason = TerminationReason.OPTIMUM_REACHED
            break
        g = problem.gradient(x)
        g_norm = float(np.linalg.norm(g))
        if g_norm == 0.0:
            reason = (
                TerminationReason.OPTIMUM_REACHED
                if problem.f_star is not None and _optimal_enough(problem, fx, stop)
                else TerminationReason.STALLED
            )
            break
        try:
            t = schedule.radius(k, x, problem)
        except MethodError as exc:
            raise MethodError(f"normalized_gd step {k}: {exc}", partial_trace=trace) from exc
        x_next = x - t * g / g_norm
        linear_model = QuadraticProblem(np.zeros((problem.dimension, problem.dimension)), g)
        model_point = brox_quadratic(linear_model, x, t).point
        gap = float(np.linalg.norm(model_point - x_next))
        if gap > _LINEARIZATION_TOL * (1.0 + float(np.linalg.norm(x)) + t):
            raise MethodError(
                f"normalized step and linearization brox differ by {gap:.3e} at step {k}",
                partial_trace=trace,
            )
        f_next = problem.value(x_next)
        trace.add_step(
            x_next,
            f_next,
            t=t,
            step_len=float(np.linalg.norm(x_next - x)),
            c=g_norm / t,
            grad_norm_next=_grad_norm(problem, x_next),
            dist_next=problem.distance_to_optimum(x_next),
            residual=0.0,
            extras={"grad_norm": g_norm, "linearization_gap": gap},
        )
        logger.debug("normalized_gd k=%d t=%.6g f=%.12g", k, t, f_next)
        x, fx = x_next, f_next
    return _finish(trace, reason)


def run_abpm(
    problem: ObjectiveProblem,
    x0: PointLike,
    stop: Optional[StopRule] = None,
    lipschitz: Optional[float] = None,
) -> IterateTrace:
    """
    Accelerated BPM through the proximal forms of its two model steps.

    With gamma = (k+1)/(2L), x_{k+1} is the proximal point of the linear
    model at y_k taken from x_k, and y_{k+1} the proximal point of the
    quadratic upper model taken from x_{k+1}. Trace rows carry y_k as the
    iterate and x_k as ``aux``; the implied radii t^x and t^y go to extras
    and each step is checked against the broximal point of its model.
    """
    stop = stop or StopRule()
    L = lipschitz if lipschitz is not None else problem.lipschitz
    if L is None or not L > 0:
        raise MethodError("A-BPM needs a positive smoothness constant L")
    if not problem.convex:
        raise MethodError("A-BPM needs a convex problem")
    trace, y, fy = _start("abpm", problem, x0, L=L)
    trace.final.aux = y.copy()
    x = y.copy()
    identity = np.eye(problem.dimension)
    reason = TerminationReason.MAX_ITER

    for k in range(stop.max_iter):
        if stop.reached_optimum(fy, problem.f_star):
            reason = TerminationReason.OPTIMUM_REACHED
            break
        g = problem.gradient(y)
        g_norm = float(np.linalg.norm(g))
        if g_norm == 0.0:
            reason = TerminationReason.OPTIMUM_REACHED
            break
        gamma = (k + 1) / (2.0 * L)
        x_next = x - gamma * g
        y_next = (L * y - g + x_next / gamma) / (L + 1.0 / gamma)
        t_x = gamma * g_norm
        t_y = gamma * float(np.linalg.norm(g + L * (y_next - y)))

        lower_model = QuadraticProblem(np.zeros_like(identity), g)
        upper_model = QuadraticProblem(L * identity, g - L * y)
        scale = 1.0 + float(np.linalg.norm(x)) + float(np.linalg.norm(y))
        gap_x = float(np.linalg.norm(brox_quadratic(lower_model, x, t_x).point - x_next))
        gap_y = 0.0
        if t_y > 0.0:
            gap_y = float(np.linalg.norm(brox_quadratic(upper_model, x_next, t_y).point - y_next))
        if max(gap_x, gap_y) > _MODEL_BROX_TOL * scale:
            raise MethodError(
                f"A-BPM model brox mismatch at step {k}: {gap_x:.3e}, {gap_y:.3e}",
                partial_trace=trace,
            )
        fy_next = problem.value(y_next)
        trace.add_step(
            y_next,
            fy_next,
            t=t_y,
            step_len=float(np.linalg.norm(y_next - y)),
            grad_norm_next=_grad_norm(problem, y_next),
            dist_next=problem.distance_to_optimum(y_next),
            residual=max(gap_x, gap_y),
            aux_next=x_next,
            extras={"gamma": gamma, "t_x": t_x, "t_y": t_y},
        )
        logger.debug("abpm k=%d gamma=%.6g f(y)=%.12g", k, gamma, fy_next)
        x, y, fy = x_next, y_next, fy_next
    return _finish(trace, reason)


def run_bpm_pth(
    problem: ObjectiveProblem,
    x0: PointLike,
    gamma: float,
    p: int,
    stop: Optional[StopRule] = None,
) -> IterateTrace:
    """
    BPM with the p-th order radius t_k = (gamma ||grad f(x_{k+1})||)^(1/p).

    Each step solves the p-th order proximal problem and records its length
    as the radius.
    """
    stop = stop or StopRule()
    if not problem.convex or not problem.differentiable:
        raise MethodError("p-th order BPM needs a convex differentiable problem")
    trace, x, fx = _start("bpm_pth", problem, x0, gamma=gamma, p=p)
    reason = TerminationReason.MAX_ITER

    for k in range(stop.max_iter):
        if stop.reached_optimum(fx, problem.f_star):
            reason = TerminationReason.OPTIMUM_REACHED
            break
        try:
            z = prox_p(problem, x, gamma, p)
        except OracleError as exc:
            raise MethodError(f"bpm_pth step {k} failed: {exc}", partial_trace=trace) from exc
        t = float(np.linalg.norm(z - x))
        if stop.is_fixed_point(t, x, 0.0):
            reason = TerminationReason.OPTIMUM_REACHED
            break
        grad_next = float(np.linalg.norm(problem.gradient(z)))
        implied = (gamma * grad_next) ** (1.0 / p)
        if abs(t - implied) > _PTH_IDENTITY_TOL * (1.0 + t):
            raise MethodError(
                f"p-th order radius identity off by {abs(t - implied):.3e} at step {k}",
                partial_trace=trace,
            )
        fz = problem.value(z)
        trace.add_step(
            z,
            fz,
            t=t,
            step_len=t,
            c=grad_next / t,
            grad_norm_next=grad_next,
            dist_next=problem.distance_to_optimum(z),
            residual=prox_p_residual(problem, x, z, gamma, p),
            extras={"implied_radius": implied},
        )
        logger.debug("bpm_pth k=%d t=%.6g f=%.12g", k, t, fz)
        x, fx = z, fz
    return _finish(trace, reason)


def _ball_set_point(
    minimizers: MinimizerSet, x: np.ndarray, t: float, farthest: bool
) -> np.ndarray:
    """A point of (minimizer set) intersected with B_t(x): the projection or the farthest one."""
    projection = minimizers.project(x)
    if not farthest:
        return projection
    distance = float(np.linalg.norm(x - projection))
    if isinstance(minimizers, AffineSet) and minimizers.basis.shape[1] > 0:
        reach = float(np.sqrt(max(t * t - distance * distance, 0.0)))
        direction = minimizers.basis[:, 0]
        sign = 1.0 if float((projection - minimizers.point) @ direction) >= 0 else -1.0
        return projection + sign * reach * direction
    if isinstance(minimizers, IntervalUnion):
        center = float(x[0])
        ends = []
        for lo, hi in minimizers.intervals:
            a, b = max(lo, center - t), min(hi, center + t)
            if a <= b:
                ends.extend([a, b])
        return np.array([max(ends, key=lambda e: (abs(e - center), e))])
    inside = [p for p in minimizers.representatives() if np.linalg.norm(p - x) <= t]
    return max(inside, key=lambda p: (float(np.linalg.norm(p - x)), tuple(p.tolist())))


def run_sbpm(
    problem: FiniteSumProblem,
    x0: PointLike,
    t: float,
    stop: Optional[StopRule] = None,
    seed: int = 0,
    projected: bool = True,
) -> IterateTrace:
    """
    Stochastic BPM: x_{k+1} = projection of x_k onto brox_t f_xi(x_k), xi uniform.

    When B_t(x_k) meets the client's minimizer set the broximal set is that
    intersection and the projection equals the projection onto the client's
    minimizer set. With ``projected=False`` the farthest point of the
    broximal set is taken instead.
    """
    stop = stop or StopRule()
    if not t > 0:
        raise MethodError("SBPM needs t > 0")
    for index, client in enumerate(problem.clients):
        if not isinstance(client, (QuadraticProblem, PiecewiseLinear1D)) or not client.convex:
            raise MethodError(f"client {index} must be a convex quadratic or piecewise-linear function")
        if client.metadata.minimizer_set is None:
            raise MethodError(f"client {index} has no minimizer")
    rng = np.random.default_rng(seed)
    method = "sbpm" if projected else "sbpm_unprojected"
    trace, x, fx = _start(method, problem, x0, seed, t=t, n=problem.n)
    reason = TerminationReason.MAX_ITER

    for k in range(stop.max_iter):
        if stop.reached_optimum(fx, problem.f_star):
            reason = TerminationReason.OPTIMUM_REACHED
            break
        xi = int(rng.integers(problem.n))
        client = problem.clients[xi]
        minimizers = client.metadata.minimizer_set
        if minimizers.distance(x) <= t:
            u = _ball_set_point(minimizers, x, t, farthest=not projected)
            c, residual = 0.0, 0.0
        else:
            if isinstance(client, QuadraticProblem):
                result = brox_quadratic(client, x, t)
            else:
                result = brox_pwl1d(client, x, t)
            u, c = result.point, result.multiplier_c
            residual = result.residual
        fu = problem.value(u)
        trace.add_step(
            u,
            fu,
            t=t,
            step_len=float(np.linalg.norm(u - x)),
            c=c,
            grad_norm_next=_grad_norm(problem, u),
            dist_next=problem.distance_to_optimum(u),
            client=xi,
            residual=residual,
        )
        logger.debug("%s k=%d client=%d f=%.12g", method, k, xi, fu)
        x, fx = u, fu
    return _finish(trace, reason)


def run_bregbpm(
    problem: ObjectiveProblem,
    h: BregmanGenerator,
    x0: PointLike,
    t: float,
    stop: Optional[StopRule] = None,
) -> IterateTrace:
    """Bregman BPM: x_{k+1} = argmin f over {z : D_h(z, x_k) <= t^2}."""
    stop = stop or StopRule()
    trace, x, fx = _start("bregbpm", problem, x0, t=t, h=h.name)
    reason = TerminationReason.MAX_ITER

    for k in range(stop.max_iter):
        if stop.reached_optimum(fx, problem.f_star):
            reason = TerminationReason.OPTIMUM_REACHED
            break
        try:
            result = breg_brox(problem, h, x, t)
        except OracleError as exc:
            raise MethodError(f"bregbpm step {k} failed: {exc}", partial_trace=trace) from exc
        u, c = result.point, result.multiplier_c
        step = float(np.linalg.norm(u - x))
        if stop.is_fixed_point(step, x, c):
            reason = (
                TerminationReason.OPTIMUM_REACHED
                if _optimal_enough(problem, fx, stop)
                else TerminationReason.STALLED
            )
            break
        fu = problem.value(u)
        trace.add_step(
            u,
            fu,
            t=t,
            step_len=step,
            c=c,
            grad_norm_next=_grad_norm(problem, u),
            dist_next=problem.distance_to_optimum(u),
            residual=result.residual,
            extras={"divergence_gap": abs(h.divergence(u, x) - t * t)},
        )
        logger.debug("bregbpm k=%d c=%.6g f=%.12g", k, c, fu)
        x, fx = u, fu
    return _finish(trace, reason)


def run_ppm(
    problem: ObjectiveProblem,
    x0: PointLike,
    gamma_schedule: RadiusSchedule,
    stop: Optional[StopRule] = None,
) -> IterateTrace:
    """
    Proximal point method x_{k+1} = prox_{gamma_k f}(x_k).

    The step size goes in the ``t`` column. With a known strong convexity
    constant mu the contraction factor 1/(1 + gamma mu) is kept in extras.
    """
    stop = stop or StopRule()
    if gamma_schedule.kind not in (ScheduleKind.CONSTANT, ScheduleKind.EXPLICIT_LIST):
        raise MethodError("PPM step sizes must be constant or an explicit list")
    trace, x, fx = _start("ppm", problem, x0, schedule=gamma_schedule.to_dict())
    mu = problem.metadata.mu
    reason = TerminationReason.MAX_ITER

    for k in range(stop.max_iter):
        if stop.reached_optimum(fx, problem.f_star):
            reason = TerminationReason.OPTIMUM_REACHED
            break
        gamma = gamma_schedule.radius(k)
        try:
            z = prox(problem, x, gamma)
        except OracleError as exc:
            raise MethodError(f"ppm step {k} failed: {exc}", partial_trace=trace) from exc
        step = float(np.linalg.norm(z - x))
        if stop.is_fixed_point(step, x, 0.0):
            reason = (
                TerminationReason.OPTIMUM_REACHED
                if _optimal_enough(problem, fx, stop)
                else TerminationReason.STALLED
            )
            break
        fz = problem.value(z)
        extras = {}
        if mu is not None:
            extras["contraction_factor"] = 1.0 / (1.0 + gamma * mu)
        trace.add_step(
            z,
            fz,
            t=gamma,
            step_len=step,
            grad_norm_next=_grad_norm(problem, z),
            dist_next=problem.distance_to_optimum(z),
            residual=0.0,
            extras=extras,
        )
        x, fx = z, fz
    return _finish(trace, reason)


def brox_prox_equivalence_check(
    problem: ObjectiveProblem,
    x: PointLike,
    t: float,
    oracle: Optional[OracleFn] = None,
    tolerance: float = 1e-8,
) -> EquivalenceReport:
    """
    Check that the broximal point u equals prox(f, x, t / ||grad f(u)||).

    Skipped when u is optimal, where the step size is undefined.
    """
    if not problem.convex or not problem.differentiable:
        raise MethodError("the broximal-proximal equivalence needs a convex differentiable problem")
    center = as_point(x, problem.dimension)
    oracle = oracle or BroxOracle()
    u = oracle(problem, center, t).point
    g_norm = float(np.linalg.norm(problem.gradient(u)))
    if g_norm <= 1e-14 * (1.0 + float(np.linalg.norm(u))):
        return EquivalenceReport(u, None, None, None, Verdict.skipped("broximal point is optimal"))
    gamma = t / g_norm
    z = prox(problem, center, gamma)
    residual = float(np.linalg.norm(z - u))
    verdict = Verdict.passed() if residual <= tolerance else Verdict.failed(0)
    return EquivalenceReport(u, z, gamma, residual, verdict)
