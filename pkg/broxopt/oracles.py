"""
Broximal, proximal and Bregman-broximal oracles.

The broximal operator returns the minimizers of f over the closed ball
B_t(x). Exact oracles exist for piecewise-linear functions on the line
(candidate enumeration) and for quadratics (trust-region subproblem); any
other smooth problem goes through a seeded multi-start projected gradient
solver that reports its own certificate residuals.
"""

import logging
from typing import Callable, Optional, Union

import numpy as np
from scipy import optimize

from broxopt.exceptions import NonConvexError, OracleError
from broxopt.problems import (
    BregmanGenerator,
    FiniteSumProblem,
    ObjectiveProblem,
    PiecewiseLinear1D,
    PointLike,
    QuadraticProblem,
    as_point,
)
from broxopt.types import BroxResult, OracleBudget

logger = logging.getLogger(__name__)

# Relative tolerance under which candidate values are considered tied
_TIE_TOL = 1e-12


def _check_radius(t: float) -> float:
    t = float(t)
    if not t > 0 or not np.isfinite(t):
        raise OracleError(f"radius must be positive and finite, got {t}")
    return t


def _lexicographic(points: list[np.ndarray]) -> list[int]:
    return sorted(range(len(points)), key=lambda i: tuple(points[i].tolist()))


def _complementarity(distance: float, t: float, multiplier: float) -> float:
    """|dist - t| when the constraint is active (c > 0), else 0."""
    if multiplier > 0:
        return abs(distance - t)
    return 0.0


def brox_pwl1d(f: PiecewiseLinear1D, x: PointLike, t: float) -> BroxResult:
    """
    Exact broximal points of a piecewise-linear function by candidate enumeration.

    The minimum of a piecewise-linear function over an interval is attained at
    an end of the interval or at a breakpoint inside it, so every global
    minimizer among those candidates is returned (ascending).

    Args:
        f: Piecewise-linear function.
        x: Ball center (a real or a length-1 array).
        t: Radius.

    Returns:
        BroxResult with one multiplier per returned point.
    """
    t = _check_radius(t)
    center = float(as_point(x, 1)[0])
    lo, hi = center - t, center + t
    candidates = {lo, hi}
    candidates.update(b for b in f.breakpoints if lo <= b <= hi)
    values = {z: f.value_scalar(z) for z in candidates}
    best = min(values.values())
    tie = _TIE_TOL * (1.0 + abs(best))
    minimizers = sorted(z for z, v in values.items() if v <= best + tie)

    multipliers = [_pwl_multiplier(f, center, z, t) for z in minimizers]
    boundary = max(
        _complementarity(abs(z - center), t, c) for z, c in zip(minimizers, multipliers)
    )
    return BroxResult(
        points=[np.array([z]) for z in minimizers],
        multipliers=multipliers,
        boundary_residual=boundary,
        stationarity_residual=0.0,
        exact=True,
        evaluations_used=len(candidates),
        unique=len(minimizers) == 1,
    )


def _pwl_multiplier(f: PiecewiseLinear1D, center: float, u: float, t: float) -> float:
    """
    c with c * (x - u) a one-sided slope at u.

    Zero when u is interior or when 0 lies between the one-sided slopes;
    otherwise the slope on the side facing the center, divided by t.
    """
    if abs(abs(u - center) - t) > _TIE_TOL * (1.0 + t):
        return 0.0
    left, right = f.side_slopes(u)
    if min(left, right) <= 0.0 <= max(left, right):
        return 0.0
    inner = left if u > center else right
    return abs(inner) / t


def _solve_trust_region(
    eigenvalues: np.ndarray,
    eigenvectors: np.ndarray,
    g: np.ndarray,
    radius: float,
) -> tuple[list[np.ndarray], float, bool]:
    """
    Global minimizers of 1/2 s^T A s + g^T s over ||s|| <= radius.

    A is given by its eigendecomposition. Returns the minimizing steps, the
    Lagrange multiplier and whether the minimizer is unique.
    """
    scale = max(1.0, float(np.max(np.abs(eigenvalues))))
    eig_tol = 1e-10 * scale
    g_hat = eigenvectors.T @ g
    g_tol = 1e-10 * (1.0 + float(np.linalg.norm(g)))
    smallest = float(eigenvalues[0])

    if smallest > eig_tol:
        step = -eigenvectors @ (g_hat / eigenvalues)
        if np.linalg.norm(step) <= radius:
            return [step], 0.0, True

    elif smallest >= -eig_tol:
        rank = eigenvalues > eig_tol
        if np.all(np.abs(g_hat[~rank]) <= g_tol):
            step = -eigenvectors[:, rank] @ (g_hat[rank] / eigenvalues[rank])
            if np.linalg.norm(step) <= radius:
                # a flat direction makes the interior minimizer set affine
                return [step], 0.0, False

    else:
        leading = eigenvalues <= smallest + eig_tol
        if np.all(np.abs(g_hat[leading]) <= g_tol):
            shift = -smallest
            rest = ~leading
            partial = -eigenvectors[:, rest] @ (g_hat[rest] / (eigenvalues[rest] + shift))
            partial_norm = float(np.linalg.norm(partial))
            if partial_norm <= radius:
                tau = float(np.sqrt(max(radius * radius - partial_norm * partial_norm, 0.0)))
                direction = eigenvectors[:, 0]
                if tau == 0.0:
                    return [partial], shift, True
                return [partial + tau * direction, partial - tau * direction], shift, False

    lower = max(0.0, -smallest)
    active = g_hat != 0.0

    def step_norm(lam: float) -> float:
        with np.errstate(divide="ignore", invalid="ignore"):
            coefficients = g_hat[active] / (eigenvalues[active] + lam)
        return float(np.linalg.norm(coefficients))

    def secular(lam: float) -> float:
        norm = step_norm(lam)
        if not np.isfinite(norm):
            return 1.0 / radius
        if norm == 0.0:
            return -np.inf
        return 1.0 / radius - 1.0 / norm

    upper = max(lower, float(np.linalg.norm(g)) / radius - smallest) + 1.0
    if secular(lower) <= 0.0:
        lam = lower
    else:
        try:
            lam = optimize.brentq(secular, lower, upper, xtol=1e-15 * (1.0 + upper), maxiter=500)
        except (RuntimeError, ValueError) as exc:
            raise OracleError(f"secular equation did not converge: {exc}") from exc
    with np.errstate(divide="ignore", invalid="ignore"):
        coefficients = np.where(active, g_hat / (eigenvalues + lam), 0.0)
    step = -eigenvectors @ coefficients
    norm = float(np.linalg.norm(step))
    if norm > 0.0:
        step *= radius / norm
    return [step], float(lam), True


def brox_quadratic(f: QuadraticProblem, x: PointLike, t: float) -> BroxResult:
    """
    Exact broximal point(s) of a quadratic via the trust-region subproblem.

    The multiplier solves the secular equation ||(A + lam I)^{-1} g|| = t on
    lam >= max(0, -lambda_min(A)); the hard case adds a leading-eigenvector
    component and returns both boundary points.
    """
    t = _check_radius(t)
    center = as_point(x, f.dimension)
    g = f.gradient(center)
    steps, lam, unique = _solve_trust_region(f.eigenvalues, f.eigenvectors, g, t)
    points = [center + s for s in steps]
    order = _lexicographic(points)
    points = [points[i] for i in order]

    stationarity = 0.0
    boundary = 0.0
    for point in points:
        offset = center - point
        stationarity = max(stationarity, float(np.linalg.norm(f.gradient(point) - lam * offset)))
        boundary = max(boundary, _complementarity(float(np.linalg.norm(offset)), t, lam))
    return BroxResult(
        points=points,
        multipliers=[lam] * len(points),
        boundary_residual=boundary,
        stationarity_residual=stationarity,
        exact=True,
        evaluations_used=1,
        unique=unique,
    )


class _BudgetExhausted(Exception):
    pass


class _CountedObjective:
    """
    Value and gradient of ``f`` that charge a shared evaluation budget.

    The best point seen inside the ball is kept so that a solve cut short
    by the budget still has an answer.
    """

    def __init__(self, f: ObjectiveProblem, center: np.ndarray, t: float, limit: int) -> None:
        self.f = f
        self.center = center
        self.t = t
        self.limit = limit
        self.used = 0
        self.best_point = center.copy()
        self.best_value = np.inf

    @property
    def exhausted(self) -> bool:
        return self.used >= self.limit

    def _charge(self) -> None:
        if self.exhausted:
            raise _BudgetExhausted
        self.used += 1

    def value(self, z: np.ndarray) -> float:
        self._charge()
        fz = float(self.f.value(z))
        inside = float(np.linalg.norm(z - self.center)) <= self.t
        if inside and (fz, tuple(z.tolist())) < (self.best_value, tuple(self.best_point.tolist())):
            self.best_point, self.best_value = np.array(z, dtype=np.float64), fz
        return fz

    def gradient(self, z: np.ndarray) -> np.ndarray:
        self._charge()
        return self.f.gradient(z)


def _project_ball(z: np.ndarray, center: np.ndarray, t: float) -> np.ndarray:
    offset = z - center
    norm = float(np.linalg.norm(offset))
    if norm <= t:
        return z
    return center + offset * (t / norm)


def _ball_constraint(center: np.ndarray, t: float) -> optimize.NonlinearConstraint:
    """||z - x||^2 <= t^2 as a smooth inequality."""
    return optimize.NonlinearConstraint(
        lambda z: float(np.sum((z - center) ** 2)),
        -np.inf,
        t * t,
        jac=lambda z: 2.0 * (z - center)[np.newaxis, :],
    )


def _solve_from_start(
    objective: _CountedObjective,
    constraint: optimize.NonlinearConstraint,
    start: np.ndarray,
    tolerance: float,
) -> tuple[np.ndarray, float]:
    center, t = objective.center, objective.t
    try:
        result = optimize.minimize(
            objective.value,
            _project_ball(start, center, t),
            jac=objective.gradient,
            method="SLSQP",
            constraints=[constraint],
            # ftol is a tolerance on the change in f, not in z
            options={"maxiter": 500, "ftol": 1e-2 * tolerance},
        )
    except _BudgetExhausted:
        return objective.best_point, objective.best_value
    point = _project_ball(np.asarray(result.x, dtype=np.float64), center, t)
    distance = float(np.linalg.norm(point - center))
    # Snap active solutions onto the sphere so the multiplier is recovered.
    if distance > 0 and t - distance <= 1e-7 * (1.0 + t):
        point = center + (point - center) * (t / distance)
    if not result.success:
        logger.debug("SLSQP start stopped early: %s", result.message)
    return point, float(objective.f.value(point))


def _uniform_ball_starts(
    rng: np.random.Generator, center: np.ndarray, t: float, count: int
) -> list[np.ndarray]:
    dimension = center.shape[0]
    starts = []
    for _ in range(count):
        direction = rng.standard_normal(dimension)
        direction /= np.linalg.norm(direction)
        starts.append(center + direction * t * rng.random() ** (1.0 / dimension))
    return starts


def brox_blackbox(
    f: ObjectiveProblem,
    x: PointLike,
    t: float,
    budget: Optional[OracleBudget] = None,
) -> BroxResult:
    """
    Approximate broximal point of a smooth function by multi-start SLSQP on the ball.

    Starts are the center, the normalized-gradient boundary point and
    ``budget.restarts`` points drawn uniformly in the ball. Each start is
    solved by SLSQP under ||z - x||^2 <= t^2 and every value or gradient
    call is charged to the budget. The best local solution wins, ties
    broken by the lexicographic order of the point.

    Args:
        f: Any problem with a gradient.
        x: Ball center.
        t: Radius.
        budget: Evaluation limit, restart count, inner tolerance and seed.

    Returns:
        BroxResult with ``exact=False`` and honestly computed residuals.
    """
    t = _check_radius(t)
    budget = budget or OracleBudget()
    center = as_point(x, f.dimension)
    rng = np.random.default_rng(budget.rng_seed)
    objective = _CountedObjective(f, center, t, budget.max_evaluations)
    constraint = _ball_constraint(center, t)

    starts = [center.copy()]
    g0 = f.gradient(center)
    objective.used += 1
    g0_norm = float(np.linalg.norm(g0))
    if g0_norm > 0:
        starts.append(center - t * g0 / g0_norm)
    starts.extend(_uniform_ball_starts(rng, center, t, budget.restarts))

    best_point = center
    best_value = float(f.value(center))
    objective.used += 1
    for index, start in enumerate(starts):
        if objective.exhausted:
            logger.warning(
                "brox_blackbox budget of %d evaluations exhausted after %d of %d starts",
                budget.max_evaluations,
                index,
                len(starts),
            )
            break
        point, value = _solve_from_start(objective, constraint, start, budget.inner_tolerance)
        logger.debug("start %d finished at f=%.12g", index, value)
        if (value, tuple(point.tolist())) < (best_value, tuple(best_point.tolist())):
            best_point, best_value = point, value

    offset = center - best_point
    distance = float(np.linalg.norm(offset))
    gradient = f.gradient(best_point)
    on_boundary = distance > 0 and abs(distance - t) <= 1e-9 * (1.0 + t)
    multiplier = 0.0
    if on_boundary:
        multiplier = max(0.0, float(gradient @ offset) / (distance * distance))
    return BroxResult(
        points=[best_point],
        multipliers=[multiplier],
        boundary_residual=_complementarity(distance, t, multiplier),
        stationarity_residual=float(np.linalg.norm(gradient - multiplier * offset)),
        exact=False,
        evaluations_used=objective.used,
        unique=True,
        budget_exhausted=objective.exhausted,
    )


def prox(f: ObjectiveProblem, x: PointLike, gamma: float) -> np.ndarray:
    """
    Proximal point argmin_z gamma f(z) + 1/2 ||z - x||^2 of a convex function.

    Quadratics use the closed form (I + gamma A) z = x - gamma b, convex
    piecewise-linear functions use candidate enumeration, one-dimensional
    smooth functions a bracketed root find on z + gamma f'(z) = x, and any
    other smooth convex problem a quasi-Newton solve.
    """
    gamma = float(gamma)
    if not gamma > 0:
        raise OracleError(f"gamma must be positive, got {gamma}")
    if not f.convex:
        raise NonConvexError(f"prox refused on nonconvex problem {f.name!r}")
    center = as_point(x, f.dimension)

    if isinstance(f, FiniteSumProblem):
        merged = f.as_quadratic()
        if merged is not None:
            return prox(merged, center, gamma)
    if isinstance(f, QuadraticProblem):
        system = np.eye(f.dimension) + gamma * f.matrix
        return np.linalg.solve(system, center - gamma * f.linear)
    if isinstance(f, PiecewiseLinear1D):
        return np.array([_prox_pwl(f, float(center[0]), gamma)])

    g0 = f.gradient(center)
    if not np.any(g0):
        return center.copy()
    if f.dimension == 1:
        spread = gamma * abs(float(g0[0]))

        def optimality(z: float) -> float:
            return z + gamma * float(f.gradient(np.array([z]))[0]) - float(center[0])

        try:
            root = optimize.brentq(
                optimality, center[0] - spread, center[0] + spread, xtol=1e-14, maxiter=500
            )
        except (RuntimeError, ValueError) as exc:
            raise OracleError(f"prox root find failed: {exc}") from exc
        return np.array([root])
    return _minimize_smooth(
        lambda z: gamma * f.value(z) + 0.5 * float(np.sum((z - center) ** 2)),
        lambda z: gamma * f.gradient(z) + (z - center),
        center,
    )


def _prox_pwl(f: PiecewiseLinear1D, x: float, gamma: float) -> float:
    def objective(z: float) -> float:
        return gamma * f.value_scalar(z) + 0.5 * (z - x) ** 2

    edges = (-np.inf, *f.breakpoints, np.inf)
    candidates = list(f.breakpoints)
    for slope, lo, hi in zip(f.slopes, edges, edges[1:]):
        z = x - gamma * slope
        if lo <= z <= hi:
            candidates.append(z)
    return min(candidates, key=lambda z: (objective(z), z))


def _minimize_smooth(
    fun: Callable[[np.ndarray], float],
    jac: Callable[[np.ndarray], np.ndarray],
    start: np.ndarray,
) -> np.ndarray:
    result = optimize.minimize(
        fun,
        start,
        jac=jac,
        method="L-BFGS-B",
        options={"maxiter": 5000, "gtol": 1e-12, "ftol": 1e-15},
    )
    if not result.success:
        logger.warning("inner minimization stopped early: %s", result.message)
    return np.asarray(result.x, dtype=np.float64)


def prox_p(f: ObjectiveProblem, x: PointLike, gamma: float, p: int) -> np.ndarray:
    """
    p-th order proximal point argmin_z gamma f(z) + ||z - x||^(p+1) / (p+1).

    The step length r = ||z - x|| is found by a 1-D root find, using that
    z = prox(f, x, gamma / r^(p-1)) at the solution.
    """
    if p < 1:
        raise OracleError(f"p must be at least 1, got {p}")
    if not gamma > 0:
        raise OracleError(f"gamma must be positive, got {gamma}")
    if not f.convex:
        raise NonConvexError(f"prox_p refused on nonconvex problem {f.name!r}")
    center = as_point(x, f.dimension)
    if p == 1:
        return prox(f, center, gamma)
    g0_norm = float(np.linalg.norm(f.gradient(center)))
    if g0_norm == 0.0:
        return center.copy()

    def candidate(r: float) -> np.ndarray:
        return prox(f, center, gamma / r ** (p - 1))

    def mismatch(r: float) -> float:
        return float(np.linalg.norm(candidate(r) - center)) - r

    upper = (gamma * g0_norm) ** (1.0 / p)
    lower = upper * 1e-12
    if mismatch(lower) <= 0.0:
        return candidate(lower)
    if mismatch(upper) >= 0.0:
        return candidate(upper)
    try:
        r = optimize.brentq(mismatch, lower, upper, xtol=1e-15 * (1.0 + upper), maxiter=500)
    except (RuntimeError, ValueError) as exc:
        raise OracleError(f"prox_p root find failed: {exc}") from exc
    z = candidate(r)
    residual = prox_p_residual(f, center, z, gamma, p)
    if residual > 1e-9 * (1.0 + float(np.linalg.norm(center))):
        logger.warning("prox_p residual %.3e above target", residual)
    return z


def prox_p_residual(
    f: ObjectiveProblem, x: np.ndarray, z: np.ndarray, gamma: float, p: int
) -> float:
    """||z - x + (gamma / ||grad f(z)||^(p-1))^(1/p) grad f(z)||."""
    g = f.gradient(z)
    g_norm = float(np.linalg.norm(g))
    if g_norm == 0.0:
        return float(np.linalg.norm(z - x))
    coefficient = (gamma / g_norm ** (p - 1)) ** (1.0 / p)
    return float(np.linalg.norm(z - x + coefficient * g))


def breg_brox(
    f: ObjectiveProblem,
    h: BregmanGenerator,
    x: PointLike,
    t: float,
) -> BroxResult:
    """
    Minimizer of f over the Bregman ball {z : D_h(z, x) <= t^2}.

    Quadratic f with quadratic h is reduced to a Euclidean trust-region
    subproblem of radius t * sqrt(2) after the change of variables
    w = Q^{1/2} (z - x). Other smooth convex pairs use bisection on the
    multiplier c of min f(z) + c D_h(z, x).
    """
    t = _check_radius(t)
    if not f.convex:
        raise NonConvexError(f"breg_brox refused on nonconvex problem {f.name!r}")
    center = as_point(x, f.dimension)
    if not h.certify(center):
        raise OracleError(f"{h!r} is not certified strictly convex around x")

    quadratic = f.as_quadratic() if isinstance(f, FiniteSumProblem) else f
    exact = isinstance(quadratic, QuadraticProblem) and h.is_quadratic
    if exact:
        points, multiplier = _breg_brox_quadratic(quadratic, h, center, t)
    elif not f.differentiable:
        raise OracleError("breg_brox needs a differentiable objective")
    else:
        points, multiplier = _breg_brox_bisection(f, h, center, t)

    grad_h_center = h.h_grad(center)
    stationarity = 0.0
    boundary = 0.0
    for point in points:
        residual = f.gradient(point) - multiplier * (grad_h_center - h.h_grad(point))
        stationarity = max(stationarity, float(np.linalg.norm(residual)))
        if multiplier > 0:
            boundary = max(boundary, abs(h.divergence(point, center) - t * t))
    return BroxResult(
        points=points,
        multipliers=[multiplier] * len(points),
        boundary_residual=boundary,
        stationarity_residual=stationarity,
        exact=exact,
        evaluations_used=1,
        unique=len(points) == 1,
    )


def _breg_brox_quadratic(
    f: QuadraticProblem, h: BregmanGenerator, center: np.ndarray, t: float
) -> tuple[list[np.ndarray], float]:
    q_eigenvalues, q_vectors = np.linalg.eigh(h.hessian)
    inv_root = q_vectors @ np.diag(1.0 / np.sqrt(q_eigenvalues)) @ q_vectors.T
    transformed = inv_root @ f.matrix @ inv_root
    transformed = 0.5 * (transformed + transformed.T)
    eigenvalues, eigenvectors = np.linalg.eigh(transformed)
    steps, lam, _ = _solve_trust_region(
        eigenvalues, eigenvectors, inv_root @ f.gradient(center), t * np.sqrt(2.0)
    )
    points = [center + inv_root @ s for s in steps]
    order = _lexicographic(points)
    return [points[i] for i in order], lam


def _breg_brox_bisection(
    f: ObjectiveProblem, h: BregmanGenerator, center: np.ndarray, t: float
) -> tuple[list[np.ndarray], float]:
    target = t * t
    grad_h_center = h.h_grad(center)

    def penalized(c: float) -> np.ndarray:
        return _minimize_smooth(
            lambda z: f.value(z) + c * h.divergence(z, center),
            lambda z: f.gradient(z) + c * (h.h_grad(z) - grad_h_center),
            center,
        )

    if not np.any(f.gradient(center)):
        return [center.copy()], 0.0
    free = penalized(1e-12)
    if h.divergence(free, center) <= target:
        return [free], 0.0

    lo, hi = 0.0, 1.0
    while h.divergence(penalized(hi), center) > target:
        lo, hi = hi, 2.0 * hi
        if hi > 1e12:
            raise OracleError("breg_brox could not bracket the multiplier")
    point = penalized(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        candidate = penalized(mid)
        if h.divergence(candidate, center) > target:
            lo = mid
        else:
            hi, point = mid, candidate
        if hi - lo <= 1e-12 * (1.0 + hi):
            break
    return [point], hi


class BroxOracle:
    """
    Dispatches a broximal query to the oracle matching the problem class.

    Usage:
        oracle = BroxOracle()
        result = oracle(problem, x, t)
    """

    def __init__(self, budget: Optional[OracleBudget] = None) -> None:
        self.budget = budget or OracleBudget()
        self.calls = 0

    @staticmethod
    def is_exact_for(problem: ObjectiveProblem) -> bool:
        """Whether queries on this problem are answered exactly."""
        if isinstance(problem, (PiecewiseLinear1D, QuadraticProblem)):
            return True
        return isinstance(problem, FiniteSumProblem) and problem.as_quadratic() is not None

    def __call__(self, problem: ObjectiveProblem, x: PointLike, t: float) -> BroxResult:
        self.calls += 1
        if isinstance(problem, PiecewiseLinear1D):
            return brox_pwl1d(problem, x, t)
        if isinstance(problem, QuadraticProblem):
            return brox_quadratic(problem, x, t)
        if isinstance(problem, FiniteSumProblem):
            merged = problem.as_quadratic()
            if merged is not None:
                return brox_quadratic(merged, x, t)
        if not problem.differentiable:
            raise OracleError(f"no broximal oracle for nonsmooth problem {problem.name!r}")
        return brox_blackbox(problem, x, t, self.budget)

    def __repr__(self) -> str:
        return f"BroxOracle(calls={self.calls}, restarts={self.budget.restarts})"


OracleFn = Callable[[ObjectiveProblem, Union[np.ndarray, float], float], BroxResult]
