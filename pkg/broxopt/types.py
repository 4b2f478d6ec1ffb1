"""
Type definitions shared across the package.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Optional

import numpy as np


class TerminationReason(str, Enum):
    """Why an iteration engine stopped."""

    OPTIMUM_REACHED = "optimum_reached"
    MAX_ITER = "max_iter"
    STALLED = "stalled"


class SelectionRule(str, Enum):
    """How a single iterate is picked from a set-valued broximal output."""

    # Smallest point in coordinate-lexicographic order
    LEXICOGRAPHIC = "lexicographic"
    # Point of the set farthest from the current iterate
    FARTHEST = "farthest"
    # Euclidean projection of the current iterate onto the set
    PROJECTION = "projection"


class ScheduleKind(str, Enum):
    """Radius rules understood by RadiusSchedule."""

    CONSTANT = "constant"
    EXPLICIT_LIST = "explicit_list"
    POLYAK = "polyak"
    PTH_ORDER = "pth_order"


class TheoremId(str, Enum):
    """Inequalities that verify_trace knows how to check."""

    CONV_LIN_I = "CONV_LIN_I"
    CONV_LIN_II = "CONV_LIN_II"
    CONV_LIN_III = "CONV_LIN_III"
    CONV_LIN_IV = "CONV_LIN_IV"
    CONV_LIN_V = "CONV_LIN_V"
    COR_LIN_RATE = "COR_LIN_RATE"
    SUBLINEAR = "SUBLINEAR"
    WEAK_LIN = "WEAK_LIN"
    MULTIPLIER_DECR = "MULTIPLIER_DECR"
    SBPM_RATE = "SBPM_RATE"
    SBPM_DESCENT = "SBPM_DESCENT"
    ABPM_RATE = "ABPM_RATE"
    PPMP_RATE = "PPMP_RATE"
    BREG_RATE = "BREG_RATE"
    NGD_NBHD = "NGD_NBHD"
    NGD_ADA = "NGD_ADA"
    PPM_CONTRACTION = "PPM_CONTRACTION"


class VerdictKind(str, Enum):
    """Outcome of a theorem or property check."""

    PASS = "pass"
    FAIL = "fail"
    SKIPPED = "skipped"


@dataclass(frozen=True)
class Verdict:
    """A check outcome with the first violating step or the skip reason."""

    kind: VerdictKind
    first_violation: Optional[int] = None
    reason: Optional[str] = None

    @classmethod
    def passed(cls) -> "Verdict":
        return cls(VerdictKind.PASS)

    @classmethod
    def failed(cls, first_violation: int) -> "Verdict":
        return cls(VerdictKind.FAIL, first_violation=first_violation)

    @classmethod
    def skipped(cls, reason: str) -> "Verdict":
        return cls(VerdictKind.SKIPPED, reason=reason)

    @property
    def ok(self) -> bool:
        """True for pass and skip, False for fail."""
        return self.kind != VerdictKind.FAIL

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "first_violation": self.first_violation,
            "reason": self.reason,
        }

    def __str__(self) -> str:
        if self.kind == VerdictKind.FAIL:
            return f"fail(k={self.first_violation})"
        if self.kind == VerdictKind.SKIPPED:
            return f"skipped({self.reason})"
        return "pass"


@dataclass(frozen=True)
class OracleBudget:
    """Work limits and seed for approximate broximal oracles."""

    max_evaluations: int = 20000
    restarts: int = 16
    inner_tolerance: float = 1e-10
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.max_evaluations <= 0 or self.restarts <= 0 or self.inner_tolerance <= 0:
            raise ValueError("OracleBudget fields must be positive")
        if not 0 <= self.rng_seed < 2**64:
            raise ValueError("rng_seed must fit in 64 bits")

    def with_seed(self, rng_seed: int) -> "OracleBudget":
        """Return a copy using a different seed."""
        return OracleBudget(
            max_evaluations=self.max_evaluations,
            restarts=self.restarts,
            inner_tolerance=self.inner_tolerance,
            rng_seed=rng_seed,
        )


@dataclass
class BroxResult:
    """
    Minimizer(s) of f over a ball (or Bregman ball) with an optimality certificate.

    ``points`` are sorted in coordinate-lexicographic order and ``multipliers``
    is aligned with them; ``multiplier_c`` is the multiplier of the first point.
    """

    points: list[np.ndarray]
    multipliers: list[float]
    boundary_residual: float
    stationarity_residual: float
    exact: bool
    evaluations_used: int = 0
    # False when the minimizer set inside the ball is a continuum of which
    # ``points`` are representatives
    unique: bool = True
    budget_exhausted: bool = False

    def __post_init__(self) -> None:
        if not self.points:
            raise ValueError("BroxResult needs at least one point")
        if len(self.multipliers) != len(self.points):
            raise ValueError("one multiplier per point is required")
        if any(c < 0 for c in self.multipliers):
            raise ValueError("multipliers must be nonnegative")

    @property
    def point(self) -> np.ndarray:
        """The lexicographically smallest minimizer."""
        return self.points[0]

    @property
    def multiplier_c(self) -> float:
        return self.multipliers[0]

    @property
    def residual(self) -> float:
        """Largest reported certificate residual."""
        return max(self.boundary_residual, self.stationarity_residual)

    def select(self, x: np.ndarray, rule: SelectionRule) -> tuple[np.ndarray, float]:
        """Pick one point (and its multiplier) according to a selection rule."""
        if rule == SelectionRule.FARTHEST:
            distances = [float(np.linalg.norm(p - x)) for p in self.points]
            index = int(np.argmax(distances))
        elif rule == SelectionRule.PROJECTION:
            distances = [float(np.linalg.norm(p - x)) for p in self.points]
            index = int(np.argmin(distances))
        else:
            index = 0
        return self.points[index], self.multipliers[index]

    def to_dict(self) -> dict[str, Any]:
        return {
            "points": [p.tolist() for p in self.points],
            "multipliers": list(self.multipliers),
            "boundary_residual": self.boundary_residual,
            "stationarity_residual": self.stationarity_residual,
            "exact": self.exact,
            "evaluations_used": self.evaluations_used,
            "unique": self.unique,
            "budget_exhausted": self.budget_exhausted,
        }

    def __repr__(self) -> str:
        first = np.array2string(self.point, precision=6)
        return (
            f"BroxResult(point={first}, n_points={len(self.points)}, "
            f"c={self.multiplier_c:.6g}, exact={self.exact})"
        )


@dataclass(frozen=True)
class StopRule:
    """When an iteration engine stops."""

    max_iter: int = 1000
    # Stop when f - f_star <= f_tol (only if f_star is known)
    f_tol: float = 0.0
    # Fixed-point detection threshold on the step length
    step_tol: float = 1e-12

    def __post_init__(self) -> None:
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.f_tol < 0 or self.step_tol < 0:
            raise ValueError("tolerances must be nonnegative")

    def reached_optimum(self, f_value: float, f_star: Optional[float]) -> bool:
        return f_star is not None and f_value - f_star <= self.f_tol

    def is_fixed_point(self, step_length: float, x: np.ndarray, multiplier: float) -> bool:
        threshold = max(self.step_tol, 1e-12 * (1.0 + float(np.linalg.norm(x))))
        return step_length < threshold and multiplier == 0.0


@dataclass
class TheoremReport:
    """Per-inequality slacks for one theorem checked on one trace."""

    theorem_id: TheoremId
    per_step_slacks: list[tuple[int, float]]
    verdict: Verdict
    tolerance_used: float
    notes: dict[str, Any] = field(default_factory=dict)

    @property
    def min_slack(self) -> float:
        if not self.per_step_slacks:
            return math.inf
        return min(s for _, s in self.per_step_slacks)

    def to_dict(self) -> dict[str, Any]:
        return {
            "theorem_id": self.theorem_id.value,
            "per_step_slacks": [[k, s] for k, s in self.per_step_slacks],
            "verdict": self.verdict.to_dict(),
            "tolerance_used": self.tolerance_used,
            "notes": self.notes,
        }

    def summary(self) -> str:
        slack = "n/a" if not self.per_step_slacks else f"{self.min_slack:.3e}"
        return (
            f"{self.theorem_id.value}: {self.verdict} "
            f"(checks={len(self.per_step_slacks)}, min slack={slack}, tol={self.tolerance_used:.1e})"
        )


@dataclass
class BallConvexityReport:
    """Result of scanning the ball-convexity inequality over a grid."""

    t: float
    tested_pairs: int
    c_values: dict[tuple[float, ...], float]
    violations: list[tuple[np.ndarray, np.ndarray, np.ndarray, float]]
    verdict: Verdict

    @property
    def witness(self) -> Optional[tuple[np.ndarray, np.ndarray, np.ndarray, float]]:
        """The most violated (x, y, u, slack) tuple, if any."""
        if not self.violations:
            return None
        return min(self.violations, key=lambda v: v[3])

    def to_dict(self) -> dict[str, Any]:
        return {
            "t": self.t,
            "tested_pairs": self.tested_pairs,
            "c_values": [[list(k), v] for k, v in sorted(self.c_values.items())],
            "violations": [
                [x.tolist(), y.tolist(), u.tolist(), s] for x, y, u, s in self.violations
            ],
            "verdict": self.verdict.to_dict(),
        }


@dataclass
class PropertyReport:
    """Violations of named broximal-operator properties over a grid."""

    t: float
    violations: dict[str, list[tuple[np.ndarray, float]]]
    checked: dict[str, int]

    @property
    def verdict(self) -> Verdict:
        for name in sorted(self.violations):
            if self.violations[name]:
                return Verdict(VerdictKind.FAIL, reason=name)
        return Verdict.passed()

    def to_dict(self) -> dict[str, Any]:
        return {
            "t": self.t,
            "checked": dict(self.checked),
            "violations": {
                name: [[x.tolist(), s] for x, s in items]
                for name, items in self.violations.items()
            },
            "verdict": self.verdict.to_dict(),
        }


@dataclass
class EquivalenceReport:
    """Comparison of a broximal point with the proximal point of matching step size."""

    brox_point: np.ndarray
    prox_point: Optional[np.ndarray]
    gamma: Optional[float]
    residual: Optional[float]
    verdict: Verdict

    def to_dict(self) -> dict[str, Any]:
        return {
            "brox_point": self.brox_point.tolist(),
            "prox_point": None if self.prox_point is None else self.prox_point.tolist(),
            "gamma": self.gamma,
            "residual": self.residual,
            "verdict": self.verdict.to_dict(),
        }
