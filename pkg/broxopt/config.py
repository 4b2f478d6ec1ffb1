"""
Problem-spec codec, run configuration and environment settings.

Problem specs and run configs are JSON documents; errors carry the offending
field and, for syntax errors, the line number.
"""

import json
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np

from broxopt.exceptions import BroxoptError, ConfigError
from broxopt.factories import ProblemFactory
from broxopt.problems import (
    AffineSet,
    BlackBoxSmooth,
    BregmanGenerator,
    FiniteSumProblem,
    IntervalUnion,
    MinimizerSet,
    ObjectiveProblem,
    PiecewiseLinear1D,
    PointSet,
    QuadraticProblem,
)
from broxopt.schedules import RadiusSchedule
from broxopt.types import OracleBudget, ScheduleKind, StopRule, TheoremId

ENV_THREADS = "BROXOPT_THREADS"
ENV_LOG_LEVEL = "BROXOPT_LOG_LEVEL"

_BUILTIN_PROBLEMS = {
    "camel": ProblemFactory.six_hump_camel,
    "not_connected": ProblemFactory.not_connected,
    "two_well": ProblemFactory.two_well,
    "orthogonal_valley": ProblemFactory.orthogonal_valley,
}


class ExperimentKind(str, Enum):
    """What a run config asks the CLI to do."""

    SOLVE = "solve"
    ENVELOPE = "envelope"
    VERIFY = "verify"
    FIG1 = "fig1"
    CAMEL = "camel"
    SWEEP = "sweep"
    THRESHOLD = "threshold"


class MethodId(str, Enum):
    """Iteration engines reachable from a run config."""

    BPM = "bpm"
    NORMALIZED_GD = "normalized_gd"
    ABPM = "abpm"
    BPM_PTH = "bpm_pth"
    SBPM = "sbpm"
    SBPM_UNPROJECTED = "sbpm_unprojected"
    BREGBPM = "bregbpm"
    PPM = "ppm"
    ENVELOPE_GD = "envelope_gd"


def _require(data: dict[str, Any], key: str, prefix: str) -> Any:
    if key not in data:
        raise ConfigError("missing required field", field=f"{prefix}{key}")
    return data[key]


def _float_list(value: Any, name: str) -> list[float]:
    try:
        return [float(v) for v in value]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"expected a list of numbers: {exc}", field=name) from exc


def _matrix(value: Any, name: str) -> np.ndarray:
    try:
        matrix = np.asarray(value, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"expected a numeric matrix: {exc}", field=name) from exc
    if matrix.ndim != 2:
        raise ConfigError("expected a 2-D matrix", field=name)
    return matrix


def parse_json(text: str) -> Any:
    """json.loads with ConfigError carrying the line of a syntax error."""
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg}", line=exc.lineno) from exc


def load_json(path: Union[str, Path]) -> Any:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    return parse_json(text)


# Problem specs


def minimizer_set_from_spec(spec: dict[str, Any], prefix: str = "minimizer_set.") -> MinimizerSet:
    kind = _require(spec, "kind", prefix)
    try:
        if kind == "points":
            return PointSet([_float_list(p, f"{prefix}points") for p in _require(spec, "points", prefix)])
        if kind == "affine":
            return AffineSet(
                _float_list(_require(spec, "point", prefix), f"{prefix}point"),
                _matrix(_require(spec, "basis", prefix), f"{prefix}basis"),
            )
        if kind == "intervals":
            intervals = [
                tuple(_float_list(pair, f"{prefix}intervals"))
                for pair in _require(spec, "intervals", prefix)
            ]
            if any(len(pair) != 2 for pair in intervals):
                raise ConfigError("intervals are [lo, hi] pairs", field=f"{prefix}intervals")
            return IntervalUnion(intervals)
    except ConfigError:
        raise
    except BroxoptError as exc:
        raise ConfigError(str(exc), field=prefix.rstrip(".")) from exc
    raise ConfigError(f"unknown minimizer set kind {kind!r}", field=f"{prefix}kind")


def minimizer_set_to_spec(minimizers: MinimizerSet) -> dict[str, Any]:
    if isinstance(minimizers, PointSet):
        return {"kind": "points", "points": [p.tolist() for p in minimizers.points]}
    if isinstance(minimizers, AffineSet):
        return {"kind": "affine", "point": minimizers.point.tolist(), "basis": minimizers.basis.tolist()}
    if isinstance(minimizers, IntervalUnion):
        return {"kind": "intervals", "intervals": [list(pair) for pair in minimizers.intervals]}
    raise ConfigError(f"cannot serialize minimizer set {minimizers!r}")


def _metadata_from_spec(spec: dict[str, Any], prefix: str) -> dict[str, Any]:
    fields: dict[str, Any] = {}
    for key in ("f_star", "L", "mu"):
        if spec.get(key) is not None:
            try:
                fields[key] = float(spec[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError("expected a number", field=f"{prefix}{key}") from exc
    if spec.get("minimizer_set") is not None:
        fields["minimizer_set"] = minimizer_set_from_spec(
            spec["minimizer_set"], prefix=f"{prefix}minimizer_set."
        )
    return fields


def apply_metadata(problem: ObjectiveProblem, overrides: dict[str, Any], prefix: str = "metadata.") -> None:
    """Replace metadata fields and check that f equals f_star on the given minimizers."""
    if not overrides:
        return
    metadata = replace(problem.metadata, **overrides)
    if metadata.f_star is not None and metadata.minimizer_set is not None:
        for point in metadata.minimizer_set.representatives():
            value = problem.value(point)
            if abs(value - metadata.f_star) > 1e-9 * (1.0 + abs(metadata.f_star)):
                raise ConfigError(
                    f"f({point.tolist()}) = {value!r} disagrees with f_star = {metadata.f_star!r}",
                    field=f"{prefix}f_star",
                )
    problem.metadata = metadata


def problem_from_spec(spec: Any, prefix: str = "") -> ObjectiveProblem:
    """
    Build a problem from its JSON spec.

    Usage:
        problem_from_spec({"type": "quadratic", "matrix": [[1.0]]})
        problem_from_spec({"type": "two_well"})
    """
    if not isinstance(spec, dict):
        raise ConfigError("problem spec must be an object", field=prefix.rstrip(".") or "problem")
    kind = _require(spec, "type", prefix)
    try:
        if kind in _BUILTIN_PROBLEMS:
            problem = _BUILTIN_PROBLEMS[kind]()
        elif kind == "pwl1d":
            problem = PiecewiseLinear1D(
                _float_list(_require(spec, "breakpoints", prefix), f"{prefix}breakpoints"),
                _float_list(_require(spec, "slopes", prefix), f"{prefix}slopes"),
                float(spec.get("anchor_value", 0.0)),
                ball_convex=spec.get("ball_convex"),
                name=spec.get("name", "pwl1d"),
            )
        elif kind == "quadratic":
            matrix = _matrix(_require(spec, "matrix", prefix), f"{prefix}matrix")
            linear = spec.get("linear")
            problem = QuadraticProblem(
                matrix,
                None if linear is None else _float_list(linear, f"{prefix}linear"),
                float(spec.get("constant", 0.0)),
                name=spec.get("name", "quadratic"),
            )
        elif kind == "finite_sum":
            clients = _require(spec, "clients", prefix)
            if not isinstance(clients, list):
                raise ConfigError("clients must be a list", field=f"{prefix}clients")
            problem = FiniteSumProblem(
                [problem_from_spec(c, f"{prefix}clients[{i}].") for i, c in enumerate(clients)],
                name=spec.get("name", "finite_sum"),
            )
        else:
            raise ConfigError(f"unknown problem type {kind!r}", field=f"{prefix}type")
    except ConfigError:
        raise
    except (BroxoptError, ValueError) as exc:
        raise ConfigError(str(exc), field=prefix.rstrip(".") or "problem") from exc
    metadata = spec.get("metadata")
    if metadata is not None:
        if not isinstance(metadata, dict):
            raise ConfigError("metadata must be an object", field=f"{prefix}metadata")
        apply_metadata(problem, _metadata_from_spec(metadata, f"{prefix}metadata."), f"{prefix}metadata.")
    return problem


def problem_to_spec(problem: ObjectiveProblem) -> dict[str, Any]:
    """Inverse of problem_from_spec for the serializable problem classes."""
    if isinstance(problem, PiecewiseLinear1D):
        if problem.name in ("not_connected", "two_well"):
            return {"type": problem.name}
        spec: dict[str, Any] = {
            "type": "pwl1d",
            "breakpoints": list(problem.breakpoints),
            "slopes": list(problem.slopes),
            "anchor_value": problem.anchor_value,
        }
    elif isinstance(problem, QuadraticProblem):
        spec = {
            "type": "quadratic",
            "matrix": problem.matrix.tolist(),
            "linear": problem.linear.tolist(),
            "constant": problem.constant,
        }
    elif isinstance(problem, FiniteSumProblem):
        if problem.name == "orthogonal_valley":
            return {"type": "orthogonal_valley"}
        spec = {"type": "finite_sum", "clients": [problem_to_spec(c) for c in problem.clients]}
    elif isinstance(problem, BlackBoxSmooth) and problem.name == "camel":
        return {"type": "camel"}
    else:
        raise ConfigError(f"problem {problem.name!r} has no spec form")
    spec["name"] = problem.name
    return spec


def load_problem(source: Union[str, Path, dict[str, Any]]) -> ObjectiveProblem:
    """Problem from a spec file path or an inline spec."""
    if isinstance(source, dict):
        return problem_from_spec(source)
    return problem_from_spec(load_json(source))


# Run configuration


def schedule_from_spec(spec: dict[str, Any], problem: Optional[ObjectiveProblem] = None) -> RadiusSchedule:
    prefix = "schedule."
    kind_name = _require(spec, "kind", prefix)
    try:
        kind = ScheduleKind(kind_name)
    except ValueError:
        raise ConfigError(f"unknown schedule kind {kind_name!r}", field=f"{prefix}kind") from None
    try:
        if kind == ScheduleKind.CONSTANT:
            return RadiusSchedule.constant(float(_require(spec, "t", prefix)))
        if kind == ScheduleKind.EXPLICIT_LIST:
            return RadiusSchedule.explicit(_float_list(_require(spec, "t_list", prefix), f"{prefix}t_list"))
        if kind == ScheduleKind.POLYAK:
            if spec.get("f_star") is not None:
                return RadiusSchedule.polyak(float(spec["f_star"]))
            if problem is None:
                raise ConfigError("polyak schedule needs f_star", field=f"{prefix}f_star")
            return RadiusSchedule.polyak_for(problem)
        return RadiusSchedule.pth_order(float(_require(spec, "gamma", prefix)), int(spec.get("p", 2)))
    except ConfigError:
        raise
    except (BroxoptError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc), field=prefix.rstrip(".")) from exc


def stop_from_spec(spec: dict[str, Any]) -> StopRule:
    try:
        return StopRule(
            max_iter=int(spec.get("max_iter", 1000)),
            f_tol=float(spec.get("f_tol", 0.0)),
            step_tol=float(spec.get("step_tol", 1e-12)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), field="stop") from exc


def budget_from_spec(spec: dict[str, Any], seed: int = 0) -> OracleBudget:
    try:
        return OracleBudget(
            max_evaluations=int(spec.get("max_evaluations", 20000)),
            restarts=int(spec.get("restarts", 16)),
            inner_tolerance=float(spec.get("inner_tolerance", 1e-10)),
            rng_seed=seed,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc), field="budget") from exc


@dataclass
class ExperimentConfig:
    """
    A run of the CLI as a document.

    Usage:
        config = ExperimentConfig.from_dict({
            "experiment": "solve",
            "problem": {"type": "quadratic", "matrix": [[1.0]]},
            "method": "bpm",
            "schedule": {"kind": "constant", "t": 1.0},
            "x0": [5.0],
        })
    """

    experiment: ExperimentKind
    problem_spec: Optional[dict[str, Any]] = None
    method: MethodId = MethodId.BPM
    schedule_spec: dict[str, Any] = field(default_factory=lambda: {"kind": "constant", "t": 1.0})
    stop: StopRule = field(default_factory=StopRule)
    seed: int = 0
    out: Optional[Path] = None
    replicates: int = 1
    verify: list[TheoremId] = field(default_factory=list)
    budget: OracleBudget = field(default_factory=OracleBudget)
    x0: Optional[list[float]] = None
    t_values: list[float] = field(default_factory=list)
    n_starts: int = 1000
    bregman_matrix: Optional[list[list[float]]] = None
    # envelope grid: (lo, hi, points per axis); planar problems use the square grid
    grid: tuple[float, float, int] = (-5.0, 5.0, 101)

    def __post_init__(self) -> None:
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1", field="replicates")
        if self.n_starts < 1:
            raise ConfigError("n_starts must be at least 1", field="n_starts")

    @classmethod
    def from_dict(cls, data: Any, base_dir: Optional[Path] = None) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("run config must be an object")
        try:
            experiment = ExperimentKind(_require(data, "experiment", ""))
        except ValueError:
            raise ConfigError(f"unknown experiment {data['experiment']!r}", field="experiment") from None
        try:
            method = MethodId(data.get("method", "bpm"))
        except ValueError:
            raise ConfigError(f"unknown method {data['method']!r}", field="method") from None

        problem = data.get("problem")
        if isinstance(problem, str):
            path = Path(problem)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            problem = load_json(path)
        if problem is not None and not isinstance(problem, dict):
            raise ConfigError("problem must be a path or an object", field="problem")

        verify = []
        for i, name in enumerate(data.get("verify", [])):
            try:
                verify.append(TheoremId(str(name).upper()))
            except ValueError:
                raise ConfigError(f"unknown theorem id {name!r}", field=f"verify[{i}]") from None

        seed = _int(data.get("seed", 0), "seed")
        out = data.get("out")
        x0 = data.get("x0")
        return cls(
            experiment=experiment,
            problem_spec=problem,
            method=method,
            schedule_spec=data.get("schedule", {"kind": "constant", "t": 1.0}),
            stop=stop_from_spec(data.get("stop", {})),
            seed=seed,
            out=None if out is None else Path(out),
            replicates=_int(data.get("replicates", 1), "replicates"),
            verify=verify,
            budget=budget_from_spec(data.get("budget", {}), seed),
            x0=None if x0 is None else _float_list(x0 if isinstance(x0, list) else [x0], "x0"),
            t_values=_float_list(data.get("t_values", []), "t_values"),
            n_starts=_int(data.get("n_starts", 1000), "n_starts"),
            bregman_matrix=data.get("bregman"),
            grid=_grid(data.get("grid", {})),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ExperimentConfig":
        path = Path(path)
        return cls.from_dict(load_json(path), base_dir=path.parent)

    def build_problem(self) -> ObjectiveProblem:
        if self.problem_spec is None:
            raise ConfigError("this experiment needs a problem", field="problem")
        return problem_from_spec(self.problem_spec, prefix="problem.")

    def build_schedule(self, problem: Optional[ObjectiveProblem] = None) -> RadiusSchedule:
        return schedule_from_spec(self.schedule_spec, problem)

    def build_bregman(self, dimension: int) -> BregmanGenerator:
        if self.bregman_matrix is None:
            return BregmanGenerator.euclidean(dimension)
        try:
            return BregmanGenerator.quadratic(_matrix(self.bregman_matrix, "bregman"))
        except BroxoptError as exc:
            raise ConfigError(str(exc), field="bregman") from exc

    def seed_for(self, replicate: int) -> int:
        """Seed of replicate ``replicate``: seed + replicate index."""
        if not 0 <= replicate < self.replicates:
            raise ConfigError(f"replicate {replicate} out of range", field="replicates")
        return self.seed + replicate

    @property
    def seeds(self) -> list[int]:
        return [self.seed_for(i) for i in range(self.replicates)]


def _grid(spec: Any) -> tuple[float, float, int]:
    if not isinstance(spec, dict):
        raise ConfigError("grid must be an object", field="grid")
    lo = float(spec.get("lo", -5.0))
    hi = float(spec.get("hi", 5.0))
    num = _int(spec.get("num", 101), "grid.num")
    if not lo < hi or num < 2:
        raise ConfigError("grid needs lo < hi and at least two points", field="grid")
    return lo, hi, num


def _int(value: Any, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError("expected an integer", field=name)
    return int(value)


@dataclass(frozen=True)
class Settings:
    """Process-level settings read from the environment."""

    threads: int
    log_level: str = "WARNING"

    @classmethod
    def from_env(cls, environ: Optional[dict[str, str]] = None) -> "Settings":
        environ = os.environ if environ is None else environ
        raw = environ.get(ENV_THREADS)
        if raw is None or raw == "":
            threads = os.cpu_count() or 1
        else:
            try:
                threads = int(raw)
            except ValueError:
                raise ConfigError(f"{ENV_THREADS} must be a positive integer, got {raw!r}") from None
            if threads < 1:
                raise ConfigError(f"{ENV_THREADS} must be a positive integer, got {raw!r}")
        return cls(threads=threads, log_level=environ.get(ENV_LOG_LEVEL, "WARNING").upper())
