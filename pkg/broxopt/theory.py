"""
Executable convergence guarantees.

verify_trace evaluates the inequalities of a named guarantee on a recorded
run and reports the slack of every check; check_ball_convexity and its weak
variant scan the defining inequality of ball-convexity over grids;
check_brox_properties scans the structural properties of the operator.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np

from broxopt.exceptions import OracleError, ProblemError, UnknownTheoremError
from broxopt.oracles import BroxOracle, OracleFn
from broxopt.problems import (
    BregmanGenerator,
    FiniteSumProblem,
    MinimizerSet,
    ObjectiveProblem,
    PointLike,
    PointSet,
    as_point,
)
from broxopt.trace import IterateRow, IterateTrace
from broxopt.types import (
    BallConvexityReport,
    PropertyReport,
    TerminationReason,
    TheoremId,
    TheoremReport,
    Verdict,
)

logger = logging.getLogger(__name__)

BASE_TOLERANCE = 1e-9
RESIDUAL_FACTOR = 10.0
BALL_CONVEXITY_TOL = 1e-7

# Slope of log(f(x_K) - f_star) against log K for p-th order BPM
PTH_FIT_WINDOW = (5, 100)
PTH_SLOPE_MARGIN = 0.1
PTH_RESIDUAL_TOL = 1e-8

Slacks = list[tuple[int, float]]


class _Skip(Exception):
    """Raised inside a check when its hypotheses are not met."""


@dataclass
class _CheckContext:
    trace: IterateTrace
    problem: ObjectiveProblem
    h: Optional[BregmanGenerator] = None
    x_star: Optional[np.ndarray] = None
    p: Optional[int] = None
    notes: dict[str, Any] = field(default_factory=dict)

    @property
    def rows(self) -> list[IterateRow]:
        return self.trace.rows

    def require(self, condition: bool, reason: str) -> None:
        if not condition:
            raise _Skip(reason)

    def f_star(self) -> float:
        f_star = self.problem.f_star
        self.require(f_star is not None, "optimal value unknown")
        return float(f_star)

    def minimizers(self) -> MinimizerSet:
        minimizers = self.problem.metadata.minimizer_set
        self.require(minimizers is not None, "minimizer set unknown")
        return minimizers

    def reference_point(self, x: np.ndarray) -> np.ndarray:
        """The designated minimizer, or the one nearest to x."""
        if self.x_star is not None:
            return self.x_star
        return self.minimizers().project(x)

    def gaps(self) -> list[float]:
        f_star = self.f_star()
        return [row.f - f_star for row in self.rows]

    def convex(self) -> None:
        self.require(self.problem.convex, "problem is not convex")

    def convex_or_ball_convex(self) -> None:
        self.require(
            self.problem.convex or self.problem.ball_convex,
            "problem is neither convex nor known to be ball-convex",
        )

    def constant_radius(self) -> float:
        t = self.trace.constant_radius()
        self.require(t is not None, "radii are not constant")
        return float(t)

    def column(self, name: str) -> None:
        self.require(self.trace.has_column(name), f"trace lacks the {name} column")


def trace_tolerance(trace: IterateTrace) -> float:
    """Tolerance of every slack: 1e-9 plus ten times the largest oracle residual."""
    return BASE_TOLERANCE + RESIDUAL_FACTOR * trace.max_residual


# Linear convergence of BPM on convex problems


def _conv_lin_i(ctx: _CheckContext) -> Slacks:
    """A step whose ball reaches the minimizer set lands in it."""
    ctx.convex()
    f_star = ctx.f_star()
    ctx.column("dist_opt")
    slacks = []
    for row, nxt in zip(ctx.rows, ctx.rows[1:]):
        if row.dist_opt <= row.t:
            slacks.append((row.k, -(nxt.f - f_star)))
    return slacks


def _conv_lin_ii(ctx: _CheckContext) -> Slacks:
    """Outside the reach of the minimizers the step is t_k long and distances shrink by t_k^2."""
    ctx.convex()
    ctx.column("dist_opt")
    x_star = ctx.reference_point(ctx.rows[0].x)
    ctx.notes["x_star"] = x_star.tolist()
    slacks = []
    for row, nxt in zip(ctx.rows, ctx.rows[1:]):
        if row.dist_opt <= row.t:
            continue
        t2 = row.t * row.t
        slacks.append((row.k, -abs(row.step_len - row.t)))
        before = float(np.sum((row.x - x_star) ** 2))
        after = float(np.sum((nxt.x - x_star) ** 2))
        slacks.append((row.k, before - t2 - after))
        slacks.append((row.k, row.dist_opt**2 - t2 - nxt.dist_opt**2))
    return slacks


def _conv_lin_iii(ctx: _CheckContext) -> Slacks:
    """Once sum t_k^2 covers dist(x_0)^2 the iterate is optimal."""
    ctx.convex()
    gaps = ctx.gaps()
    d0 = ctx.rows[0].dist_opt
    ctx.require(d0 is not None, "initial distance unknown")
    slacks = []
    covered = 0.0
    for row in ctx.trace.steps:
        covered += row.t * row.t
        if covered >= d0 * d0:
            slacks.append((row.k + 1, -gaps[row.k + 1]))
    t = ctx.trace.constant_radius()
    if t is not None and ctx.trace.terminated_reason == TerminationReason.OPTIMUM_REACHED:
        bound = math.ceil(d0 * d0 / (t * t) - 1e-9)
        ctx.notes["step_bound"] = bound
        slacks.append((ctx.trace.num_steps, float(bound - ctx.trace.num_steps)))
    return slacks


def _conv_lin_iv(ctx: _CheckContext) -> Slacks:
    """h_{k+1} <= h_k / (1 + t_k / dist(x_{k+1}))."""
    ctx.convex()
    ctx.column("dist_opt")
    gaps = ctx.gaps()
    slacks = []
    for row, nxt in zip(ctx.rows, ctx.rows[1:]):
        d_next = nxt.dist_opt
        bound = 0.0 if d_next == 0.0 else gaps[row.k] * d_next / (d_next + row.t)
        slacks.append((row.k, bound - gaps[row.k + 1]))
    return slacks


def _conv_lin_v(ctx: _CheckContext) -> Slacks:
    """Gradient norms decrease and their radius-weighted average is bounded."""
    ctx.convex()
    ctx.require(ctx.problem.differentiable, "problem is not differentiable")
    ctx.column("grad_norm_next")
    gaps = ctx.gaps()
    previous = float(np.linalg.norm(ctx.problem.gradient(ctx.rows[0].x)))
    slacks = []
    total_t = 0.0
    weighted = 0.0
    for row in ctx.trace.steps:
        slacks.append((row.k, previous - row.grad_norm_next))
        previous = row.grad_norm_next
        total_t += row.t
        weighted += row.t * row.grad_norm_next
        slacks.append((row.k, (gaps[0] - weighted) / total_t))
    return slacks


def _cor_lin_rate(ctx: _CheckContext) -> Slacks:
    """
    h_K <= h_0 prod_{k<K} (1 + t_k / d)^{-1}.

    For convex problems d = dist(x_0); for ball-convex ones d = ||x_{k+1} - x_star||
    with x_star the minimizer nearest the final iterate.
    """
    ctx.convex_or_ball_convex()
    gaps = ctx.gaps()
    rows = ctx.rows
    slacks = []
    factor = 1.0
    if ctx.problem.convex:
        d0 = ctx.minimizers().distance(rows[0].x)
        ctx.notes["form"] = "initial_distance"
        for row in ctx.trace.steps:
            factor = 0.0 if d0 == 0.0 else factor * d0 / (d0 + row.t)
            slacks.append((row.k + 1, factor * gaps[0] - gaps[row.k + 1]))
    else:
        x_star = ctx.reference_point(rows[-1].x)
        ctx.notes["form"] = "running_distance"
        ctx.notes["x_star"] = x_star.tolist()
        for row in ctx.trace.steps:
            d_next = float(np.linalg.norm(rows[row.k + 1].x - x_star))
            factor = 0.0 if d_next == 0.0 else factor * d_next / (d_next + row.t)
            slacks.append((row.k + 1, factor * gaps[0] - gaps[row.k + 1]))
    return slacks


def _sublinear(ctx: _CheckContext) -> Slacks:
    """h_K <= 2 d0 / (2 d0 + t) * d0^2 / (2 K t^2) * h_0 for constant t."""
    ctx.convex_or_ball_convex()
    t = ctx.constant_radius()
    gaps = ctx.gaps()
    if ctx.problem.convex:
        d0 = ctx.minimizers().distance(ctx.rows[0].x)
    else:
        d0 = float(np.linalg.norm(ctx.rows[0].x - ctx.reference_point(ctx.rows[-1].x)))
    slacks = []
    for K in range(1, ctx.trace.num_steps + 1):
        bound = 2 * d0 / (2 * d0 + t) * d0 * d0 / (2 * K * t * t) * gaps[0]
        slacks.append((K, bound - gaps[K]))
    return slacks


def _weak_lin(ctx: _CheckContext) -> Slacks:
    """Every second iterate contracts: h_K <= (1 + t/d0)^{-ceil((K-1)/2)} h_0."""
    ctx.convex_or_ball_convex()
    t = ctx.constant_radius()
    gaps = ctx.gaps()
    x_star = ctx.reference_point(ctx.rows[-1].x)
    d0 = float(np.linalg.norm(ctx.rows[0].x - x_star))
    ctx.notes["x_star"] = x_star.tolist()
    slacks = []
    for K in range(1, ctx.trace.num_steps + 1):
        exponent = math.ceil((K - 1) / 2)
        bound = 0.0 if d0 == 0.0 else gaps[0] * (1 + t / d0) ** (-exponent)
        slacks.append((K, bound - gaps[K]))
    return slacks


def _multiplier_decr(ctx: _CheckContext) -> Slacks:
    """c_k ||x_{k+1} - x_k|| is nonincreasing for constant radii."""
    ctx.convex_or_ball_convex()
    ctx.constant_radius()
    ctx.column("c")
    steps = ctx.trace.steps
    return [
        (b.k, a.c * a.step_len - b.c * b.step_len) for a, b in zip(steps, steps[1:])
    ]


# Stochastic BPM


def _common_minimizer(ctx: _CheckContext) -> np.ndarray:
    problem = ctx.problem
    ctx.require(isinstance(problem, FiniteSumProblem), "problem is not a finite sum")
    ctx.require(problem.is_interpolating(), "clients share no known minimizer")
    assert isinstance(problem.metadata.minimizer_set, PointSet)
    return problem.metadata.minimizer_set.points[0]


def _sbpm_descent(ctx: _CheckContext) -> Slacks:
    """
    Distances to the common minimizer never grow and, for smooth clients,
    ||x_{k+1} - x*||^2 <= ||x_k - x*||^2 - (f_xi(x_k) - f_xi(x*)) / (L_xi / 2 + c_k).
    """
    ctx.convex()
    ctx.column("client")
    x_star = _common_minimizer(ctx)
    clients = ctx.problem.clients
    slacks = []
    for row, nxt in zip(ctx.rows, ctx.rows[1:]):
        before = float(np.linalg.norm(row.x - x_star))
        after = float(np.linalg.norm(nxt.x - x_star))
        slacks.append((row.k, before - after))
        client = clients[row.client]
        if client.lipschitz is None or row.c is None:
            continue
        denominator = client.lipschitz / 2 + row.c
        if denominator <= 0:
            continue
        decrease = (client.value(row.x) - client.value(x_star)) / denominator
        slacks.append((row.k, before * before - after * after - decrease))
    return slacks


def _sbpm_rate(ctx: _CheckContext) -> Slacks:
    """Average of h_k over the first K iterates <= L_max (1 + d0^2/t^2) d0^2 / (2K)."""
    ctx.convex()
    x_star = _common_minimizer(ctx)
    L_max = ctx.problem.lipschitz_max
    ctx.require(L_max is not None, "client smoothness constants unknown")
    t = ctx.constant_radius()
    gaps = ctx.gaps()
    d0 = float(np.linalg.norm(ctx.rows[0].x - x_star))
    ctx.notes["realized_trace"] = "bound holds in expectation; checked on this sample path"
    slacks = []
    running = 0.0
    for K in range(1, len(gaps) + 1):
        running += gaps[K - 1]
        bound = L_max * (1 + d0 * d0 / (t * t)) * d0 * d0 / (2 * K)
        slacks.append((K, bound - running / K))
    return slacks


# Accelerated, higher-order, Bregman and proximal variants


def _abpm_rate(ctx: _CheckContext) -> Slacks:
    """
    h(y_K) <= 2 L d0^2 / (K (K + 1)) on the upper-model sequence.

    The lower-model sequence x_K kept in ``aux`` is not certified; its
    largest ratio of gap to bound goes to the notes as ``aux_max_ratio``.
    """
    ctx.convex()
    L = ctx.trace.info.get("L", ctx.problem.lipschitz)
    ctx.require(L is not None, "smoothness constant unknown")
    gaps = ctx.gaps()
    d0 = ctx.minimizers().distance(ctx.rows[0].x)
    ctx.notes["L"] = float(L)
    ctx.notes["sequence"] = "y"
    bounds = {K: 2 * L * d0 * d0 / (K * (K + 1)) for K in range(1, ctx.trace.num_steps + 1)}
    f_star = ctx.f_star()
    ratios = [
        (ctx.problem.value(ctx.rows[K].aux) - f_star) / bound
        for K, bound in bounds.items()
        if ctx.rows[K].aux is not None and bound > 0
    ]
    ctx.notes["aux_max_ratio"] = max(ratios) if ratios else None
    return [(K, bound - gaps[K]) for K, bound in bounds.items()]


def _ppmp_rate(ctx: _CheckContext) -> Slacks:
    """Per-step proximal residuals plus a log-log slope fit of the suboptimality."""
    ctx.convex()
    p = ctx.trace.info.get("p", ctx.p)
    ctx.require(p is not None, "order p unknown")
    ctx.column("residual")
    gaps = ctx.gaps()
    slacks = [(row.k, PTH_RESIDUAL_TOL - row.residual) for row in ctx.trace.steps]
    lo, hi = PTH_FIT_WINDOW
    window = [K for K in range(lo, min(hi, len(gaps) - 1) + 1) if gaps[K] > 0]
    if len(window) >= 3:
        slope = float(np.polyfit(np.log(window), np.log([gaps[K] for K in window]), 1)[0])
        ctx.notes["slope"] = slope
        slacks.append((window[-1], (-p + PTH_SLOPE_MARGIN) - slope))
    else:
        ctx.notes["slope"] = None
        ctx.notes["fit"] = "too few positive gaps in the fitting window"
    return slacks


def _breg_rate(ctx: _CheckContext) -> Slacks:
    """h_K <= h_0 D_h(x*, x_0) / (K t^2) and c_k <= h_0 / t^2."""
    ctx.convex()
    ctx.require(ctx.h is not None, "Bregman generator not given")
    t = ctx.constant_radius()
    gaps = ctx.gaps()
    x0 = ctx.rows[0].x
    if ctx.x_star is not None:
        candidates = [ctx.x_star]
    else:
        minimizers = ctx.minimizers()
        candidates = [minimizers.project(x0), *minimizers.representatives()]
    divergence = min(ctx.h.divergence(x, x0) for x in candidates)
    ctx.notes["divergence"] = divergence
    slacks = []
    for K in range(1, ctx.trace.num_steps + 1):
        slacks.append((K, gaps[0] * divergence / (K * t * t) - gaps[K]))
    for row in ctx.trace.steps:
        if row.c is not None:
            slacks.append((row.k, gaps[0] / (t * t) - row.c))
    return slacks


def _ngd_nbhd(ctx: _CheckContext) -> Slacks:
    """Average h_k over the first K iterates <= G d0^2 / (2tK) + G t / 2."""
    ctx.convex()
    t = ctx.constant_radius()
    gaps = ctx.gaps()
    d0 = ctx.minimizers().distance(ctx.rows[0].x)
    slacks = []
    G = 0.0
    running = 0.0
    for K, row in enumerate(ctx.trace.steps, start=1):
        G = max(G, float(np.linalg.norm(ctx.problem.gradient(row.x))))
        running += gaps[K - 1]
        slacks.append((K, G * d0 * d0 / (2 * t * K) + G * t / 2 - running / K))
    return slacks


def _ngd_ada(ctx: _CheckContext) -> Slacks:
    """Admissible radii give d_{k+1}^2 <= d_k^2 - t_k^2."""
    ctx.convex()
    ctx.f_star()
    schedule = ctx.trace.info.get("schedule")
    if isinstance(schedule, dict):
        ctx.require(schedule.get("kind") == "polyak", "radii are not Polyak radii")
    x_star = ctx.reference_point(ctx.rows[0].x)
    slacks = []
    for row, nxt in zip(ctx.rows, ctx.rows[1:]):
        g = ctx.problem.gradient(row.x)
        g_norm = float(np.linalg.norm(g))
        if g_norm == 0.0:
            continue
        admissible = float(np.dot(g, row.x - x_star)) / g_norm
        slacks.append((row.k, admissible - row.t))
        before = float(np.sum((row.x - x_star) ** 2))
        after = float(np.sum((nxt.x - x_star) ** 2))
        slacks.append((row.k, before - row.t * row.t - after))
    return slacks


def _ppm_contraction(ctx: _CheckContext) -> Slacks:
    """dist_{k+1}^2 <= dist_k^2 / (1 + gamma_k mu)."""
    ctx.convex()
    mu = ctx.problem.metadata.mu
    ctx.require(mu is not None, "strong convexity constant unknown")
    ctx.column("dist_opt")
    return [
        (row.k, row.dist_opt**2 / (1 + row.t * mu) - nxt.dist_opt**2)
        for row, nxt in zip(ctx.rows, ctx.rows[1:])
    ]


_BPM_FAMILY = frozenset({"bpm", "envelope_gd"})

_CHECKS: dict[TheoremId, tuple[frozenset[str], Callable[[_CheckContext], Slacks]]] = {
    TheoremId.CONV_LIN_I: (_BPM_FAMILY, _conv_lin_i),
    TheoremId.CONV_LIN_II: (_BPM_FAMILY, _conv_lin_ii),
    TheoremId.CONV_LIN_III: (_BPM_FAMILY, _conv_lin_iii),
    TheoremId.CONV_LIN_IV: (_BPM_FAMILY, _conv_lin_iv),
    TheoremId.CONV_LIN_V: (_BPM_FAMILY, _conv_lin_v),
    TheoremId.COR_LIN_RATE: (_BPM_FAMILY, _cor_lin_rate),
    TheoremId.SUBLINEAR: (_BPM_FAMILY, _sublinear),
    TheoremId.WEAK_LIN: (_BPM_FAMILY, _weak_lin),
    TheoremId.MULTIPLIER_DECR: (_BPM_FAMILY, _multiplier_decr),
    TheoremId.SBPM_RATE: (frozenset({"sbpm"}), _sbpm_rate),
    TheoremId.SBPM_DESCENT: (frozenset({"sbpm"}), _sbpm_descent),
    TheoremId.ABPM_RATE: (frozenset({"abpm"}), _abpm_rate),
    TheoremId.PPMP_RATE: (frozenset({"bpm_pth"}), _ppmp_rate),
    TheoremId.BREG_RATE: (frozenset({"bregbpm"}), _breg_rate),
    TheoremId.NGD_NBHD: (frozenset({"normalized_gd"}), _ngd_nbhd),
    TheoremId.NGD_ADA: (frozenset({"normalized_gd"}), _ngd_ada),
    TheoremId.PPM_CONTRACTION: (frozenset({"ppm"}), _ppm_contraction),
}


def parse_theorem_id(value: Union[str, TheoremId]) -> TheoremId:
    if isinstance(value, TheoremId):
        return value
    try:
        return TheoremId(value.upper())
    except ValueError:
        raise UnknownTheoremError(value) from None


def verify_trace(
    trace: IterateTrace,
    problem: ObjectiveProblem,
    theorem_id: Union[str, TheoremId],
    h: Optional[BregmanGenerator] = None,
    x_star: Optional[PointLike] = None,
    p: Optional[int] = None,
) -> TheoremReport:
    """
    Evaluate the inequalities of one guarantee on every applicable step.

    Args:
        trace: Recorded run.
        problem: The problem the run was made on; its metadata drives gating.
        theorem_id: Which guarantee to check.
        h: Bregman generator, needed for BREG_RATE.
        x_star: Designated minimizer; the nearest known minimizer is used otherwise.
        p: Order of the proximal step for PPMP_RATE when the trace does not record it.

    Returns:
        A report whose verdict is ``fail`` at the first step with a slack
        below the tolerance, ``skipped`` when the hypotheses are not met or
        nothing applies, ``pass`` otherwise.

    Raises:
        UnknownTheoremError: ``theorem_id`` names no known guarantee.
    """
    theorem = parse_theorem_id(theorem_id)
    methods, check = _CHECKS[theorem]
    tolerance = trace_tolerance(trace)
    context = _CheckContext(
        trace,
        problem,
        h=h,
        x_star=None if x_star is None else as_point(x_star, problem.dimension),
        p=p,
    )
    try:
        context.require(
            trace.method in methods,
            f"{theorem.value} covers {', '.join(sorted(methods))} runs, not {trace.method}",
        )
        slacks = check(context)
    except _Skip as skip:
        logger.warning("%s skipped: %s", theorem.value, skip)
        return TheoremReport(theorem, [], Verdict.skipped(str(skip)), tolerance, context.notes)

    if not slacks:
        verdict = Verdict.skipped("no applicable steps")
    else:
        violating = [k for k, s in slacks if s < -tolerance]
        verdict = Verdict.failed(min(violating)) if violating else Verdict.passed()
    report = TheoremReport(theorem, slacks, verdict, tolerance, context.notes)
    logger.info(report.summary())
    return report


def verify_all(
    trace: IterateTrace,
    problem: ObjectiveProblem,
    theorem_ids: Sequence[Union[str, TheoremId]],
    **kwargs: Any,
) -> list[TheoremReport]:
    return [verify_trace(trace, problem, theorem_id, **kwargs) for theorem_id in theorem_ids]


def count_far_iterates(trace: IterateTrace, threshold: float = 1e-3) -> int:
    """Number of iterates at distance at least ``threshold`` from the minimizers."""
    return sum(1 for d in trace.distances if d is not None and d >= threshold)


# Grid scans


def _exact_brox(oracle: OracleFn, problem: ObjectiveProblem, x: np.ndarray, t: float):
    result = oracle(problem, x, t)
    if not result.exact:
        raise OracleError(
            "ball-convexity scans need an exact oracle; an approximate minimizer "
            "could produce false violations"
        )
    return result


def _points(grid: Sequence[PointLike], dimension: int) -> list[np.ndarray]:
    return [as_point(x, dimension) for x in grid]


def check_ball_convexity(
    problem: ObjectiveProblem,
    t: float,
    grid_x: Sequence[PointLike],
    grid_y: Sequence[PointLike],
    oracle: Optional[OracleFn] = None,
) -> BallConvexityReport:
    """
    Test f(y) >= f(u) + c_t(x) <x - u, y - u> for every broximal point u of x.

    The multiplier is the one reported by the oracle.

    Raises:
        OracleError: The oracle is not exact on this problem class.
    """
    if not t > 0:
        raise OracleError(f"radius must be positive, got {t}")
    oracle = oracle or BroxOracle()
    ys = _points(grid_y, problem.dimension)
    f_ys = [problem.value(y) for y in ys]
    c_values: dict[tuple[float, ...], float] = {}
    violations = []
    pairs = 0
    for x in _points(grid_x, problem.dimension):
        result = _exact_brox(oracle, problem, x, t)
        c_values[tuple(x.tolist())] = result.multiplier_c
        for u, c in zip(result.points, result.multipliers):
            f_u = problem.value(u)
            for y, f_y in zip(ys, f_ys):
                pairs += 1
                slack = f_y - f_u - c * float(np.dot(x - u, y - u))
                if slack < -BALL_CONVEXITY_TOL:
                    violations.append((x, y, u, slack))
    verdict = Verdict.passed() if not violations else Verdict.failed(0)
    report = BallConvexityReport(t, pairs, c_values, violations, verdict)
    logger.info("ball-convexity scan t=%g: %d pairs, %d violations", t, pairs, len(violations))
    return report


def check_weak_ball_convexity(
    problem: ObjectiveProblem,
    t: float,
    grid_x: Sequence[PointLike],
    x_star: Optional[PointLike] = None,
    oracle: Optional[OracleFn] = None,
) -> BallConvexityReport:
    """
    Test the two weak inequalities against a designated minimizer x*:

        f(u) - f* <= c <x - u, u - x*>     and     f(x) - f(u) >= c ||x - u||^2.

    Violations are reported as (x, x*, u, slack).
    """
    if not t > 0:
        raise OracleError(f"radius must be positive, got {t}")
    f_star = problem.f_star
    if f_star is None:
        raise ProblemError("weak ball-convexity needs a known optimal value")
    if x_star is None:
        minimizers = problem.metadata.minimizer_set
        if minimizers is None:
            raise ProblemError("weak ball-convexity needs a designated minimizer")
        anchor = minimizers.representatives()[0]
    else:
        anchor = as_point(x_star, problem.dimension)
    oracle = oracle or BroxOracle()
    c_values: dict[tuple[float, ...], float] = {}
    violations = []
    pairs = 0
    for x in _points(grid_x, problem.dimension):
        result = _exact_brox(oracle, problem, x, t)
        c_values[tuple(x.tolist())] = result.multiplier_c
        f_x = problem.value(x)
        for u, c in zip(result.points, result.multipliers):
            pairs += 1
            f_u = problem.value(u)
            first = c * float(np.dot(x - u, u - anchor)) - (f_u - f_star)
            second = f_x - f_u - c * float(np.sum((x - u) ** 2))
            slack = min(first, second)
            if slack < -BALL_CONVEXITY_TOL:
                violations.append((x, anchor, u, slack))
    verdict = Verdict.passed() if not violations else Verdict.failed(0)
    return BallConvexityReport(t, pairs, c_values, violations, verdict)


_PROPERTY_NAMES = (
    "single_valued",
    "boundary_law",
    "convex_combination",
    "strict_descent",
    "c_upper",
    "c_lower",
)

_COMBINATION_WEIGHTS = (0.0, 0.25, 0.5, 0.75, 1.0)


def check_brox_properties(
    problem: ObjectiveProblem,
    t: float,
    grid_x: Sequence[PointLike],
    oracle: Optional[OracleFn] = None,
) -> PropertyReport:
    """
    Scan the structural properties of the broximal operator.

    Properties checked, by name:
        single_valued: a singleton output whenever the ball misses the minimizers.
        boundary_law: ||x - u|| = t whenever the ball misses the minimizers.
        convex_combination: convex combinations of known minimizers map into the minimizers.
        strict_descent: f(u) < f(x) for non-optimal x.
        c_upper: c ||x - u||^2 <= f(x) - f(u).
        c_lower: c >= (f(u) - f*) / (||u - x|| ||u - x*||) with x* nearest to u.

    Raises:
        ProblemError: The minimizer set or optimal value is unknown.
        OracleError: The oracle is not exact on this problem class.
    """
    minimizers = problem.metadata.minimizer_set
    f_star = problem.f_star
    if minimizers is None or f_star is None:
        raise ProblemError("property scan needs a known minimizer set and optimal value")
    oracle = oracle or BroxOracle()
    violations: dict[str, list[tuple[np.ndarray, float]]] = {name: [] for name in _PROPERTY_NAMES}
    checked = dict.fromkeys(_PROPERTY_NAMES, 0)

    for x in _points(grid_x, problem.dimension):
        result = _exact_brox(oracle, problem, x, t)
        tol = BASE_TOLERANCE * (1.0 + t) + RESIDUAL_FACTOR * result.residual
        f_x = problem.value(x)
        distance = minimizers.distance(x)
        outside_reach = distance > t + tol
        optimal = distance <= tol

        if outside_reach:
            checked["single_valued"] += 1
            if len(result.points) > 1:
                violations["single_valued"].append((x, -float(len(result.points) - 1)))

        for u, c in zip(result.points, result.multipliers):
            f_u = problem.value(u)
            step = float(np.linalg.norm(x - u))
            if outside_reach:
                checked["boundary_law"] += 1
                slack = -abs(step - t)
                if slack < -tol:
                    violations["boundary_law"].append((x, slack))
            if not optimal:
                checked["strict_descent"] += 1
                if not f_u < f_x:
                    violations["strict_descent"].append((x, f_x - f_u))
                nearest = minimizers.project(u)
                far = float(np.linalg.norm(u - nearest))
                if step > 0.0 and far > tol:
                    checked["c_lower"] += 1
                    slack = c - (f_u - f_star) / (step * far)
                    if slack < -tol:
                        violations["c_lower"].append((x, slack))
            checked["c_upper"] += 1
            slack = f_x - f_u - c * step * step
            if slack < -tol:
                violations["c_upper"].append((x, slack))

    representatives = minimizers.representatives()
    for i, a in enumerate(representatives):
        for b in representatives[i:]:
            for weight in _COMBINATION_WEIGHTS:
                z = weight * a + (1.0 - weight) * b
                result = _exact_brox(oracle, problem, z, t)
                checked["convex_combination"] += 1
                worst = max(problem.value(u) - f_star for u in result.points)
                if worst > BASE_TOLERANCE + RESIDUAL_FACTOR * result.residual:
                    violations["convex_combination"].append((z, -worst))

    report = PropertyReport(t, violations, checked)
    logger.info("property scan t=%g: %s", t, report.verdict)
    return report
