"""
Ball envelope N(x) = min over B_t(x) of f, and gradient descent on it.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from broxopt.exceptions import MethodError, OracleError, ProblemError, SetValuedError
from broxopt.oracles import BroxOracle, OracleFn
from broxopt.problems import ObjectiveProblem, PointLike, as_point
from broxopt.trace import IterateTrace
from broxopt.types import BroxResult, PropertyReport, StopRule, TerminationReason

logger = logging.getLogger(__name__)

_BPM_AGREEMENT_TOL = 1e-9


@dataclass(frozen=True)
class EnvelopeHandle:
    """The ball envelope of ``base_problem`` with radius ``t``."""

    base_problem: ObjectiveProblem
    t: float
    oracle: OracleFn = field(default_factory=BroxOracle)

    def __post_init__(self) -> None:
        if not self.t > 0:
            raise ProblemError(f"envelope radius must be positive, got {self.t}")

    def brox(self, x: PointLike) -> BroxResult:
        return self.oracle(self.base_problem, as_point(x, self.base_problem.dimension), self.t)

    def value(self, x: PointLike) -> float:
        return self.base_problem.value(self.brox(x).point)

    def gradient(self, x: PointLike) -> np.ndarray:
        """grad N(x) = grad f(u) for the broximal point u."""
        return self.gradient_from(self.brox(x))

    def gradient_from(self, result: BroxResult) -> np.ndarray:
        """Envelope gradient from an oracle answer already computed."""
        if not self.base_problem.differentiable:
            raise OracleError("envelope gradient needs a differentiable base problem")
        gradients = [self.base_problem.gradient(p) for p in result.points]
        first = gradients[0]
        for other in gradients[1:]:
            if np.linalg.norm(other - first) > 1e-12 * (1.0 + float(np.linalg.norm(first))):
                raise SetValuedError("broximal set is not a singleton; envelope gradient undefined")
        return first


def envelope_value(env: EnvelopeHandle, x: PointLike) -> float:
    """N_t(x): f at the broximal point, never above f(x)."""
    return env.value(x)


def envelope_grad(env: EnvelopeHandle, x: PointLike) -> np.ndarray:
    return env.gradient(x)


def envelope_minimizer_check(env: EnvelopeHandle, samples: int = 200, seed: int = 0) -> PropertyReport:
    """
    Check that N(x) = f_star exactly when dist(x, minimizers) <= t.

    Points are sampled around representatives of the minimizer set at
    distances up to 3t.
    """
    problem = env.base_problem
    minimizers = problem.metadata.minimizer_set
    f_star = problem.f_star
    if minimizers is None or f_star is None:
        raise ProblemError("envelope minimizer check needs a known minimizer set and f_star")
    rng = np.random.default_rng(seed)
    anchors = minimizers.representatives()
    inside: list[tuple[np.ndarray, float]] = []
    outside: list[tuple[np.ndarray, float]] = []

    for _ in range(samples):
        anchor = anchors[int(rng.integers(len(anchors)))]
        direction = rng.standard_normal(problem.dimension)
        direction /= np.linalg.norm(direction)
        x = anchor + direction * rng.uniform(0.0, 3.0 * env.t)
        gap = env.value(x) - f_star
        distance = minimizers.distance(x)
        if distance <= env.t + 1e-8:
            if gap > 1e-8:
                inside.append((x, -gap))
        elif gap <= 0.0:
            outside.append((x, -(distance - env.t)))
    return PropertyReport(
        t=env.t,
        violations={"inside_at_optimum": inside, "outside_above_optimum": outside},
        checked={"inside_at_optimum": samples, "outside_above_optimum": samples},
    )


def _sample_box(env: EnvelopeHandle, rng: np.random.Generator, half_width: float) -> np.ndarray:
    problem = env.base_problem
    minimizers = problem.metadata.minimizer_set
    center = np.zeros(problem.dimension)
    if minimizers is not None:
        center = minimizers.representatives()[0]
    return center + rng.uniform(-half_width, half_width, size=problem.dimension)


def envelope_convexity_check(
    env: EnvelopeHandle,
    pairs: int = 1000,
    seed: int = 0,
    half_width: float = 5.0,
    tolerance: float = 1e-9,
) -> PropertyReport:
    """
    Midpoint convexity of N on random pairs.

    A pair (x, y) violates when N((x + y)/2) exceeds (N(x) + N(y))/2 by
    more than ``tolerance``, scaled by the size of the values. Pairs are
    drawn from a box of half-width ``half_width`` around a minimizer (or
    the origin). The envelope of a convex base is convex; a nonconvex base
    is expected to fail with the violating midpoint as witness.
    """
    rng = np.random.default_rng(seed)
    violations: list[tuple[np.ndarray, float]] = []
    for _ in range(pairs):
        x = _sample_box(env, rng, half_width)
        y = _sample_box(env, rng, half_width)
        mid = 0.5 * (x + y)
        n_x, n_y, n_mid = env.value(x), env.value(y), env.value(mid)
        slack = 0.5 * (n_x + n_y) - n_mid
        if slack < -tolerance * (1.0 + abs(n_x) + abs(n_y)):
            violations.append((mid, slack))
    if violations:
        logger.info("midpoint convexity failed on %d of %d pairs", len(violations), pairs)
    return PropertyReport(
        t=env.t,
        violations={"midpoint_convexity": violations},
        checked={"midpoint_convexity": pairs},
    )


def envelope_smoothness_check(
    env: EnvelopeHandle,
    lipschitz: Optional[float] = None,
    pairs: int = 1000,
    seed: int = 0,
    half_width: float = 5.0,
) -> PropertyReport:
    """
    Check ||grad N(x) - grad N(y)|| <= (L + 1e-6) ||x - y|| on random pairs.

    ``lipschitz`` defaults to the smoothness constant of the base problem.
    Pairs where the broximal set is not a singleton are counted under
    ``set_valued`` instead.
    """
    lipschitz = env.base_problem.lipschitz if lipschitz is None else lipschitz
    if lipschitz is None:
        raise ProblemError("smoothness check needs a Lipschitz constant for the gradient")
    rng = np.random.default_rng(seed)
    violations: list[tuple[np.ndarray, float]] = []
    set_valued: list[tuple[np.ndarray, float]] = []
    for _ in range(pairs):
        x = _sample_box(env, rng, half_width)
        y = _sample_box(env, rng, half_width)
        try:
            g_x, g_y = env.gradient(x), env.gradient(y)
        except SetValuedError:
            set_valued.append((x, 0.0))
            continue
        slack = (lipschitz + 1e-6) * float(np.linalg.norm(x - y)) - float(np.linalg.norm(g_x - g_y))
        if slack < -1e-12:
            violations.append((x, slack))
    return PropertyReport(
        t=env.t,
        violations={"gradient_lipschitz": violations, "set_valued": set_valued},
        checked={"gradient_lipschitz": pairs, "set_valued": pairs},
    )


def envelope_gradient_check(
    env: EnvelopeHandle,
    samples: int = 200,
    seed: int = 0,
    half_width: float = 5.0,
    tolerance: float = 1e-8,
    fd_tolerance: float = 1e-4,
) -> PropertyReport:
    """
    Check grad N(x) = grad f(brox(x)) and compare it with central differences of N.

    The identity is checked against a fresh oracle call to ``tolerance``;
    the finite-difference comparison uses the looser relative
    ``fd_tolerance`` since N is evaluated through an inner minimization.
    """
    problem = env.base_problem
    rng = np.random.default_rng(seed)
    identity: list[tuple[np.ndarray, float]] = []
    finite_difference: list[tuple[np.ndarray, float]] = []
    for _ in range(samples):
        x = _sample_box(env, rng, half_width)
        gradient = env.gradient(x)
        expected = problem.gradient(env.brox(x).point)
        scale = 1.0 + float(np.linalg.norm(expected))
        gap = float(np.linalg.norm(gradient - expected))
        if gap > tolerance * scale:
            identity.append((x, -gap))

        h = 1e-6 * (1.0 + float(np.linalg.norm(x)))
        estimate = np.empty(problem.dimension)
        for i in range(problem.dimension):
            e = np.zeros(problem.dimension)
            e[i] = h
            estimate[i] = (env.value(x + e) - env.value(x - e)) / (2.0 * h)
        fd_gap = float(np.linalg.norm(gradient - estimate))
        if fd_gap > fd_tolerance * (1.0 + float(np.linalg.norm(gradient))):
            finite_difference.append((x, -fd_gap))
    return PropertyReport(
        t=env.t,
        violations={"gradient_identity": identity, "finite_difference": finite_difference},
        checked={"gradient_identity": samples, "finite_difference": samples},
    )


def run_gd_on_envelope(
    env: EnvelopeHandle, x0: PointLike, stop: Optional[StopRule] = None
) -> IterateTrace:
    """
    Normalized gradient descent on the envelope: x_{k+1} = x_k - t grad N / ||grad N||.

    Every step is compared with the broximal point of x_k, which is the
    step BPM takes from the same iterate.
    """
    stop = stop or StopRule()
    problem = env.base_problem
    if not problem.convex or not problem.differentiable:
        raise MethodError("GD on the envelope needs a convex differentiable base problem")
    x = as_point(x0, problem.dimension)
    fx = problem.value(x)
    trace = IterateTrace("envelope_gd", problem.dimension, info={"problem": problem.name, "t": env.t})
    trace.start(x, fx, problem.distance_to_optimum(x))
    reason = TerminationReason.MAX_ITER

    for k in range(stop.max_iter):
        result = env.brox(x)
        g = problem.gradient(result.point)
        g_norm = float(np.linalg.norm(g))
        # an interior broximal point (c = 0) minimizes f, so grad N(x) = 0
        if g_norm == 0.0 or result.multiplier_c == 0.0:
            reason = TerminationReason.OPTIMUM_REACHED
            break
        x_next = x - env.t * g / g_norm
        deviation = float(np.linalg.norm(x_next - result.point))
        if deviation > _BPM_AGREEMENT_TOL * (1.0 + float(np.linalg.norm(x))):
            raise MethodError(
                f"envelope step deviates from the broximal point by {deviation:.3e} at step {k}",
                partial_trace=trace,
            )
        f_next = problem.value(x_next)
        trace.add_step(
            x_next,
            f_next,
            t=env.t,
            step_len=float(np.linalg.norm(x_next - x)),
            c=result.multiplier_c,
            grad_norm_next=float(np.linalg.norm(problem.gradient(x_next))),
            dist_next=problem.distance_to_optimum(x_next),
            residual=result.residual,
            extras={"envelope_grad_norm": g_norm, "bpm_deviation": deviation},
        )
        x = x_next
    trace.finish(reason)
    logger.info("envelope_gd finished after %d steps: %s", trace.num_steps, reason.value)
    return trace


@dataclass
class StepSizeReport:
    """Envelope step sizes implied by a BPM trace."""

    # (k, t_k / ||grad f(x_{k+1})||, (f(x_{k+1}) - f_star) / ||grad f(x_{k+1})||^2)
    rows: list[tuple[int, float, Optional[float]]]

    @property
    def envelope_steps_nondecreasing(self) -> bool:
        steps = [gamma for _, gamma, _ in self.rows]
        return all(b >= a * (1 - 1e-9) for a, b in zip(steps, steps[1:]))


def envelope_step_sizes(trace: IterateTrace, problem: ObjectiveProblem) -> StepSizeReport:
    """
    Step sizes of gradient descent on the envelope that reproduce a BPM trace.

    Rows whose next gradient vanishes are left out.
    """
    rows = []
    iterates = trace.rows
    for row, nxt in zip(iterates, iterates[1:]):
        g_norm = float(np.linalg.norm(problem.gradient(nxt.x)))
        if g_norm == 0.0:
            continue
        polyak = None
        if problem.f_star is not None:
            polyak = (nxt.f - problem.f_star) / (g_norm * g_norm)
        rows.append((row.k, row.t / g_norm, polyak))
    return StepSizeReport(rows)
