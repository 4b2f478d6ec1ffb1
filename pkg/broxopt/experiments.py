"""
Experiment drivers: single solves, escape-threshold bisection, the two-well
and not-connected escape study, the six-hump camel success histogram and
radius sweeps.

Replicates run on worker threads through ReplicatePool; results are merged
by sorted key so that output files only depend on the configuration.
"""

import asyncio
import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Awaitable, Callable, Hashable, Optional, Sequence, TypeVar

import numpy as np

from broxopt.config import ExperimentConfig, MethodId, Settings
from broxopt.envelope import EnvelopeHandle, run_gd_on_envelope
from broxopt.exceptions import ConfigError, MethodError, OracleError, SetValuedError
from broxopt.factories import CAMEL_F_STAR, ProblemFactory
from broxopt.methods import (
    run_abpm,
    run_bpm,
    run_bpm_pth,
    run_bregbpm,
    run_normalized_gd,
    run_ppm,
    run_sbpm,
)
from broxopt.oracles import BroxOracle
from broxopt.problems import FiniteSumProblem, ObjectiveProblem, PiecewiseLinear1D, PointLike, as_point
from broxopt.schedules import RadiusSchedule
from broxopt.theory import verify_trace
from broxopt.trace import IterateTrace
from broxopt.types import OracleBudget, ScheduleKind, StopRule, TheoremReport, VerdictKind

logger = logging.getLogger(__name__)

T = TypeVar("T")

FIG1_T_VALUES = (1.0, 2.0, 2.5, 3.0)
CAMEL_T_VALUES = (0.2, 0.5, 1.0, 1.5, 2.0)
CAMEL_DISK_RADIUS = 4.0
CAMEL_SUCCESS_TOL = 1e-3
# Per-call budget of the camel runs; reported in the summary
CAMEL_BUDGET = OracleBudget(max_evaluations=4000, restarts=8, inner_tolerance=1e-8)
CAMEL_STOP = StopRule(max_iter=100, f_tol=1e-6, step_tol=1e-7)
THRESHOLD_TOL = 1e-6
_GLOBAL_TOL = 1e-9


def _dump_json(data: Any, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _slug(t: float) -> str:
    return repr(float(t)).replace(".", "p").replace("-", "m")


class ReplicatePool:
    """
    Runs blocking jobs on worker threads, at most ``threads`` at a time.

    Usage:
        async with ReplicatePool(threads=4) as pool:
            results = await pool.map({seed: partial(run, seed) for seed in seeds})
    """

    def __init__(self, threads: Optional[int] = None) -> None:
        self.threads = threads or Settings.from_env().threads
        self._semaphore = asyncio.Semaphore(self.threads)
        self.completed = 0

    async def __aenter__(self) -> "ReplicatePool":
        return self

    async def __aexit__(self, exc_type, exc_val, exc_tb) -> None:
        logger.debug("replicate pool finished %d jobs", self.completed)

    async def run(self, job: Callable[[], T]) -> T:
        async with self._semaphore:
            result = await asyncio.to_thread(job)
        self.completed += 1
        return result

    async def map(self, jobs: dict[Hashable, Callable[[], T]]) -> dict[Hashable, T]:
        """Run every job; the result dict is ordered by sorted key."""
        keys = sorted(jobs)
        awaitables: list[Awaitable[T]] = [self.run(jobs[key]) for key in keys]
        results = await asyncio.gather(*awaitables)
        return dict(zip(keys, results))


# Single runs


@dataclass
class SolveOutcome:
    """A finished run with its chained theorem reports."""

    trace: IterateTrace
    reports: list[TheoremReport] = field(default_factory=list)
    written: list[Path] = field(default_factory=list)

    @property
    def failed(self) -> bool:
        return any(r.verdict.kind == VerdictKind.FAIL for r in self.reports)

    def to_dict(self) -> dict[str, Any]:
        return {
            "trace": self.trace.to_dict(),
            "reports": [r.to_dict() for r in self.reports],
        }


def _starting_point(config: ExperimentConfig, problem: ObjectiveProblem) -> np.ndarray:
    if config.x0 is None:
        raise ConfigError("this experiment needs a starting point", field="x0")
    return as_point(config.x0, problem.dimension)


def run_method(
    config: ExperimentConfig,
    problem: ObjectiveProblem,
    x0: PointLike,
    schedule: RadiusSchedule,
    seed: int,
) -> IterateTrace:
    """Dispatch to the iteration engine named by ``config.method``."""
    method = config.method
    stop = config.stop
    if method == MethodId.BPM:
        return run_bpm(problem, x0, schedule, stop, oracle=BroxOracle(config.budget.with_seed(seed)), seed=seed)
    if method == MethodId.NORMALIZED_GD:
        return run_normalized_gd(problem, x0, schedule, stop)
    if method == MethodId.ABPM:
        return run_abpm(problem, x0, stop)
    if method == MethodId.BPM_PTH:
        if schedule.kind != ScheduleKind.PTH_ORDER:
            raise ConfigError("bpm_pth needs a pth_order schedule", field="schedule.kind")
        return run_bpm_pth(problem, x0, schedule.gamma, schedule.p_order, stop)
    if method == MethodId.PPM:
        return run_ppm(problem, x0, schedule, stop)

    if schedule.kind != ScheduleKind.CONSTANT:
        raise ConfigError(f"{method.value} needs a constant schedule", field="schedule.kind")
    t = float(schedule.t_const)
    if method in (MethodId.SBPM, MethodId.SBPM_UNPROJECTED):
        if not isinstance(problem, FiniteSumProblem):
            raise ConfigError("sbpm needs a finite_sum problem", field="problem.type")
        return run_sbpm(problem, x0, t, stop, seed=seed, projected=method == MethodId.SBPM)
    if method == MethodId.BREGBPM:
        return run_bregbpm(problem, config.build_bregman(problem.dimension), x0, t, stop)
    env = EnvelopeHandle(problem, t, BroxOracle(config.budget.with_seed(seed)))
    return run_gd_on_envelope(env, x0, stop)


def solve(config: ExperimentConfig) -> SolveOutcome:
    """
    Run the configured method once and chain the requested theorem checks.

    With ``config.out`` set, writes ``trace.csv`` and ``reports.json`` there.
    """
    problem = config.build_problem()
    schedule = config.build_schedule(problem)
    x0 = _starting_point(config, problem)
    try:
        trace = run_method(config, problem, x0, schedule, config.seed)
    except MethodError as exc:
        if exc.partial_trace is not None and config.out is not None:
            config.out.mkdir(parents=True, exist_ok=True)
            exc.partial_trace.to_csv(config.out / "partial_trace.csv")
        raise
    h = config.build_bregman(problem.dimension) if config.method == MethodId.BREGBPM else None
    reports = [verify_trace(trace, problem, theorem_id, h=h) for theorem_id in config.verify]
    outcome = SolveOutcome(trace, reports)
    if config.out is not None:
        config.out.mkdir(parents=True, exist_ok=True)
        trace_path = config.out / "trace.csv"
        trace.to_csv(trace_path)
        reports_path = config.out / "reports.json"
        _dump_json(outcome.to_dict(), reports_path)
        outcome.written = [trace_path, reports_path]
    return outcome


# Escaping local minima


def reaches_global(problem: ObjectiveProblem, x0: PointLike, t: float) -> tuple[bool, IterateTrace]:
    """Run constant-radius BPM and report whether it ends in the global minimizer set."""
    minimizers = problem.metadata.minimizer_set
    if minimizers is None:
        raise MethodError(f"problem {problem.name!r} has no known minimizer set")
    start = as_point(x0, problem.dimension)
    distance = minimizers.distance(start)
    # enough steps to cross the starting distance at radius t several times
    max_iter = max(1000, int(math.ceil(4 * (distance + 1.0) / t)))
    trace = run_bpm(problem, start, RadiusSchedule.constant(t), StopRule(max_iter=max_iter))
    return minimizers.distance(trace.final.x) <= _GLOBAL_TOL, trace


@dataclass
class EscapeThreshold:
    """
    Smallest constant radius for which BPM from x0 reaches a global minimizer.

    ``threshold`` is 0 when the lower end already reaches it and None when
    the endpoints do not bracket a monotone switch.
    """

    threshold: Optional[float]
    t_lo: float
    t_hi: float
    lower_reaches: bool
    upper_reaches: bool
    evaluations: int
    reason: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "threshold": self.threshold,
            "t_lo": self.t_lo,
            "t_hi": self.t_hi,
            "lower_reaches": self.lower_reaches,
            "upper_reaches": self.upper_reaches,
            "evaluations": self.evaluations,
            "reason": self.reason,
        }


def find_escape_threshold(
    problem: PiecewiseLinear1D,
    x0: PointLike,
    t_lo: float = 0.1,
    t_hi: float = 10.0,
    tol: float = THRESHOLD_TOL,
) -> EscapeThreshold:
    """
    Bisect the reach-global indicator of constant-radius BPM over [t_lo, t_hi].

    Args:
        problem: Piecewise-linear objective, so that every step is exact.
        x0: Starting point.
        t_lo: Lower end of the bracket.
        t_hi: Upper end of the bracket.
        tol: Width of the final bracket.

    Returns:
        The bracket's upper end once it is narrower than ``tol``.
    """
    if not isinstance(problem, PiecewiseLinear1D):
        raise MethodError("escape thresholds are computed with the exact piecewise-linear oracle")
    if not 0 < t_lo < t_hi:
        raise MethodError(f"need 0 < t_lo < t_hi, got {t_lo}, {t_hi}")
    lower, _ = reaches_global(problem, x0, t_lo)
    upper, _ = reaches_global(problem, x0, t_hi)
    evaluations = 2
    if lower:
        return EscapeThreshold(0.0, t_lo, t_hi, lower, upper, evaluations, "lower end already reaches a global minimizer")
    if not upper:
        logger.warning("no escape threshold in [%g, %g]: neither end reaches a global minimizer", t_lo, t_hi)
        return EscapeThreshold(None, t_lo, t_hi, lower, upper, evaluations, "upper end does not reach a global minimizer")

    lo, hi = t_lo, t_hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        reached, _ = reaches_global(problem, x0, mid)
        evaluations += 1
        if reached:
            hi = mid
        else:
            lo = mid
    logger.info("escape threshold for %s from %s: %.9g", problem.name, np.asarray(x0).tolist(), hi)
    return EscapeThreshold(hi, t_lo, t_hi, lower, upper, evaluations, "bisection")


@dataclass
class Fig1Row:
    t: float
    reached_global: bool
    final_x: float
    final_f: float
    num_steps: int
    reason: str


@dataclass
class Fig1Summary:
    """Outcome of constant-radius BPM for several radii from one start."""

    problem: str
    x0: float
    rows: list[Fig1Row]

    @property
    def monotone(self) -> bool:
        """Whether reaching the global minimizer is nondecreasing in t."""
        flags = [row.reached_global for row in sorted(self.rows, key=lambda r: r.t)]
        return all(b or not a for a, b in zip(flags, flags[1:]))

    def to_dict(self) -> dict[str, Any]:
        return {
            "problem": self.problem,
            "x0": self.x0,
            "monotone": self.monotone,
            "rows": [vars(row).copy() for row in self.rows],
        }


_FIG1_STARTS = {"two_well": 5.0, "not_connected": -4.0}


def experiment_fig1(
    t_values: Sequence[float] = FIG1_T_VALUES,
    x0: Optional[float] = None,
    out: Optional[Path] = None,
    problem: Optional[PiecewiseLinear1D] = None,
) -> Fig1Summary:
    """
    Constant-radius BPM with the exact piecewise-linear oracle for each t.

    Defaults to the two-well function started at 5; the not-connected
    example starts at -4.
    """
    problem = problem or ProblemFactory.two_well()
    if x0 is None:
        x0 = _FIG1_STARTS.get(problem.name, 0.0)
    rows = []
    for t in sorted(float(t) for t in t_values):
        reached, trace = reaches_global(problem, [x0], t)
        rows.append(
            Fig1Row(
                t=t,
                reached_global=reached,
                final_x=float(trace.final.x[0]),
                final_f=trace.final.f,
                num_steps=trace.num_steps,
                reason=trace.terminated_reason.value,
            )
        )
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            trace.to_csv(out / f"fig1_{problem.name}_t{_slug(t)}.csv")
    summary = Fig1Summary(problem.name, float(x0), rows)
    if not summary.monotone:
        logger.warning("reaching the global minimizer is not monotone in t on %s", problem.name)
    if out is not None:
        _dump_json(summary.to_dict(), out / f"fig1_{problem.name}_summary.json")
    logger.info(
        "fig1 on %s: reached for t in %s",
        problem.name,
        [row.t for row in rows if row.reached_global],
    )
    return summary


# Six-hump camel


def camel_starts(n_starts: int, seed: int, radius: float = CAMEL_DISK_RADIUS) -> np.ndarray:
    """Uniform samples of the disk of the given radius."""
    if n_starts < 1:
        raise ConfigError("n_starts must be at least 1", field="n_starts")
    rng = np.random.default_rng(seed)
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, size=n_starts))
    angle = rng.uniform(0.0, 2.0 * np.pi, size=n_starts)
    return np.column_stack([r * np.cos(angle), r * np.sin(angle)])


@dataclass
class CamelRun:
    t: float
    start: int
    final_f: float
    num_steps: int
    success: bool


@dataclass
class CamelSummary:
    """Per-radius success counts of BPM on the six-hump camel function."""

    n_starts: int
    seed: int
    budget: OracleBudget
    runs: list[CamelRun]

    @property
    def counts(self) -> dict[float, int]:
        counts: dict[float, int] = {}
        for run in self.runs:
            counts[run.t] = counts.get(run.t, 0) + int(run.success)
        return dict(sorted(counts.items()))

    @property
    def monotone(self) -> bool:
        values = list(self.counts.values())
        return all(b >= a for a, b in zip(values, values[1:]))

    def rate(self, t: float) -> float:
        return self.counts[float(t)] / self.n_starts

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_starts": self.n_starts,
            "seed": self.seed,
            "budget": {
                "max_evaluations": self.budget.max_evaluations,
                "restarts": self.budget.restarts,
                "inner_tolerance": self.budget.inner_tolerance,
            },
            "success_threshold": CAMEL_F_STAR + CAMEL_SUCCESS_TOL,
            "counts": [[t, c] for t, c in self.counts.items()],
            "monotone": self.monotone,
        }


def _camel_job(problem: ObjectiveProblem, start: np.ndarray, t: float, index: int, budget: OracleBudget, seed: int) -> CamelRun:
    oracle = BroxOracle(budget.with_seed(seed + index))
    trace = run_bpm(problem, start, RadiusSchedule.constant(t), CAMEL_STOP, oracle=oracle, seed=seed + index)
    final_f = trace.final.f
    return CamelRun(t, index, final_f, trace.num_steps, final_f <= CAMEL_F_STAR + CAMEL_SUCCESS_TOL)


async def experiment_camel(
    t_values: Sequence[float] = CAMEL_T_VALUES,
    n_starts: int = 1000,
    seed: int = 0,
    out: Optional[Path] = None,
    budget: Optional[OracleBudget] = None,
    threads: Optional[int] = None,
    starts: Optional[np.ndarray] = None,
) -> CamelSummary:
    """
    Count the BPM runs that reach a global minimizer of the six-hump camel.

    Every (t, start) pair is a replicate; the approximate oracle of replicate
    i is seeded with ``seed + i``.
    """
    problem = ProblemFactory.six_hump_camel()
    budget = budget or CAMEL_BUDGET
    if starts is None:
        starts = camel_starts(n_starts, seed)
    n_starts = len(starts)
    jobs = {
        (float(t), i): (lambda t=float(t), i=i: _camel_job(problem, starts[i], t, i, budget, seed))
        for t in t_values
        for i in range(n_starts)
    }
    async with ReplicatePool(threads) as pool:
        results = await pool.map(jobs)
    summary = CamelSummary(n_starts, seed, budget, list(results.values()))
    if not summary.monotone:
        logger.warning("camel success counts are not monotone in t: %s", summary.counts)
    logger.info("camel success counts: %s", summary.counts)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "camel_counts.csv", "w", newline="") as stream:
            writer = csv.writer(stream, lineterminator="\n")
            writer.writerow(["t", "successes", "n_starts"])
            for t, count in summary.counts.items():
                writer.writerow([repr(t), count, n_starts])
        _dump_json(summary.to_dict(), out / "camel_summary.json")
    return summary


# Sweeps


@dataclass
class SweepRow:
    t: float
    seed: int
    num_steps: int
    final_f: float
    reason: str


async def experiment_sweep(config: ExperimentConfig, threads: Optional[int] = None) -> list[SweepRow]:
    """Run the configured method for every radius in ``t_values`` and every replicate seed."""
    problem = config.build_problem()
    x0 = _starting_point(config, problem)
    t_values = config.t_values or [float(config.build_schedule(problem).t_const or 1.0)]

    def job(t: float, seed: int) -> SweepRow:
        trace = run_method(config, problem, x0, RadiusSchedule.constant(t), seed)
        return SweepRow(t, seed, trace.num_steps, trace.final.f, trace.terminated_reason.value)

    jobs = {(t, seed): (lambda t=t, seed=seed: job(t, seed)) for t in t_values for seed in config.seeds}
    async with ReplicatePool(threads) as pool:
        results = await pool.map(jobs)
    rows = list(results.values())
    if config.out is not None:
        config.out.mkdir(parents=True, exist_ok=True)
        with open(config.out / "sweep.csv", "w", newline="") as stream:
            writer = csv.writer(stream, lineterminator="\n")
            writer.writerow(["t", "seed", "num_steps", "final_f", "reason"])
            for row in rows:
                writer.writerow([repr(row.t), row.seed, row.num_steps, repr(row.final_f), row.reason])
    return rows


def _grid_points(dimension: int, lo: float, hi: float, num: int, base: Optional[np.ndarray]) -> list[np.ndarray]:
    axis = np.linspace(lo, hi, num)
    base = np.zeros(dimension) if base is None else np.asarray(base, dtype=np.float64)
    if dimension == 2:
        return [np.array([a, b]) for a in axis for b in axis]
    points = []
    for s in axis:
        x = base.copy()
        x[0] = s
        points.append(x)
    return points


def envelope_grid(
    problem: ObjectiveProblem,
    t: float,
    lo: float,
    hi: float,
    num: int,
    base: Optional[np.ndarray] = None,
) -> list[dict[str, Any]]:
    """
    Envelope value, broximal point and envelope gradient norm over a grid.

    Planar problems get the full ``num`` x ``num`` grid on [lo, hi]^2, first
    coordinate outermost. Other dimensions are sampled along the first
    coordinate axis through ``base``. ``grad_norm`` is None where the
    envelope gradient is undefined (tied broximal points or a nonsmooth base).
    """
    env = EnvelopeHandle(problem, t)
    rows = []
    for x in _grid_points(problem.dimension, lo, hi, num, base):
        result = env.brox(x)
        try:
            grad_norm: Optional[float] = float(np.linalg.norm(env.gradient_from(result)))
        except (SetValuedError, OracleError):
            grad_norm = None
        rows.append(
            {
                "x": x.tolist(),
                "f": problem.value(x),
                "envelope": problem.value(result.point),
                "brox": result.point.tolist(),
                "c": result.multiplier_c,
                "grad_norm": grad_norm,
            }
        )
    return rows


def write_envelope_grid(rows: list[dict[str, Any]], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    dimension = len(rows[0]["x"]) if rows else 0
    with open(path, "w", newline="") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(
            [
                *[f"x_{i}" for i in range(dimension)],
                "f",
                "envelope",
                *[f"u_{i}" for i in range(dimension)],
                "c",
                "grad_norm",
            ]
        )
        for row in rows:
            writer.writerow(
                [
                    *[repr(v) for v in row["x"]],
                    repr(row["f"]),
                    repr(row["envelope"]),
                    *[repr(v) for v in row["brox"]],
                    repr(row["c"]),
                    "" if row["grad_norm"] is None else repr(row["grad_norm"]),
                ]
            )
