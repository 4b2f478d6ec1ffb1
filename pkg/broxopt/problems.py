"""
Objective functions and the structure oracles and theorem checks rely on.

Every problem is immutable after construction; points are 1-D float64
numpy arrays of the problem's dimension.
"""

from abc import ABC, abstractmethod
from bisect import bisect_right
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import linalg

from broxopt.exceptions import ProblemError

PointLike = Union[float, Sequence[float], np.ndarray]

_SYMMETRY_TOL = 1e-12
_OPTIMUM_TOL = 1e-9


def as_point(x: PointLike, dimension: int) -> np.ndarray:
    """Convert x to a float64 vector and check its dimension."""
    point = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if point.ndim != 1 or point.shape[0] != dimension:
        raise ProblemError(
            f"expected a point of dimension {dimension}, got shape {point.shape}"
        )
    return point


class MinimizerSet(ABC):
    """An explicitly known set of global minimizers."""

    @abstractmethod
    def project(self, x: np.ndarray) -> np.ndarray:
        """Euclidean projection of x onto the set."""

    @abstractmethod
    def representatives(self) -> list[np.ndarray]:
        """Finitely many points of the set (all of them when the set is finite)."""

    def distance(self, x: np.ndarray) -> float:
        return float(np.linalg.norm(x - self.project(x)))

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return self.distance(x) <= tol


class PointSet(MinimizerSet):
    """A finite list of minimizers."""

    def __init__(self, points: Sequence[PointLike]) -> None:
        if not points:
            raise ProblemError("PointSet needs at least one point")
        self.points = [np.atleast_1d(np.asarray(p, dtype=np.float64)) for p in points]

    def project(self, x: np.ndarray) -> np.ndarray:
        distances = [float(np.linalg.norm(x - p)) for p in self.points]
        return self.points[int(np.argmin(distances))].copy()

    def representatives(self) -> list[np.ndarray]:
        return [p.copy() for p in self.points]

    def __repr__(self) -> str:
        return f"PointSet({[p.tolist() for p in self.points]})"


class AffineSet(MinimizerSet):
    """The set point + span(basis), basis columns orthonormal."""

    def __init__(self, point: PointLike, basis: np.ndarray) -> None:
        self.point = np.atleast_1d(np.asarray(point, dtype=np.float64))
        basis = np.asarray(basis, dtype=np.float64)
        if basis.ndim != 2 or basis.shape[0] != self.point.shape[0]:
            raise ProblemError("basis must be a d x k matrix")
        self.basis = basis

    def project(self, x: np.ndarray) -> np.ndarray:
        offset = x - self.point
        return self.point + self.basis @ (self.basis.T @ offset)

    def representatives(self) -> list[np.ndarray]:
        return [self.point.copy()]

    def __repr__(self) -> str:
        return f"AffineSet(point={self.point.tolist()}, dim={self.basis.shape[1]})"


class IntervalUnion(MinimizerSet):
    """A union of closed intervals on the real line (ends may be infinite)."""

    def __init__(self, intervals: Sequence[tuple[float, float]]) -> None:
        if not intervals:
            raise ProblemError("IntervalUnion needs at least one interval")
        cleaned = sorted((float(lo), float(hi)) for lo, hi in intervals)
        if any(lo > hi for lo, hi in cleaned):
            raise ProblemError("interval with lo > hi")
        self.intervals = cleaned

    def project(self, x: np.ndarray) -> np.ndarray:
        value = float(x[0])
        best, best_dist = value, np.inf
        for lo, hi in self.intervals:
            candidate = min(max(value, lo), hi)
            dist = abs(candidate - value)
            if dist < best_dist:
                best, best_dist = candidate, dist
        return np.array([best])

    def representatives(self) -> list[np.ndarray]:
        points = []
        for lo, hi in self.intervals:
            for end in (lo, hi):
                if np.isfinite(end):
                    points.append(np.array([end]))
        return points or [np.array([0.0])]

    def __repr__(self) -> str:
        return f"IntervalUnion({self.intervals})"


@dataclass(frozen=True)
class ProblemMetadata:
    """Known minimizers, optimal value and curvature constants of a problem."""

    minimizer_set: Optional[MinimizerSet] = None
    f_star: Optional[float] = None
    L: Optional[float] = None
    mu: Optional[float] = None

    def distance_to_optimum(self, x: np.ndarray) -> Optional[float]:
        if self.minimizer_set is None:
            return None
        return self.minimizer_set.distance(x)


class ObjectiveProblem(ABC):
    """A minimizable function with capability flags."""

    dimension: int
    metadata: ProblemMetadata
    name: str = "problem"

    @abstractmethod
    def value(self, x: PointLike) -> float:
        """Exact function value at x."""

    @abstractmethod
    def gradient(self, x: PointLike) -> np.ndarray:
        """Gradient (or a deterministic subgradient) at x."""

    @property
    def convex(self) -> bool:
        return False

    @property
    def ball_convex(self) -> bool:
        """True when the ball-convexity inequality is known to hold for every radius."""
        return self.convex

    @property
    def differentiable(self) -> bool:
        return True

    @property
    def f_star(self) -> Optional[float]:
        return self.metadata.f_star

    @property
    def lipschitz(self) -> Optional[float]:
        return self.metadata.L

    def distance_to_optimum(self, x: PointLike) -> Optional[float]:
        return self.metadata.distance_to_optimum(as_point(x, self.dimension))


class PiecewiseLinear1D(ObjectiveProblem):
    """
    Continuous piecewise-linear function on the real line.

    ``slopes[0]`` applies left of the first breakpoint, ``slopes[i]`` between
    breakpoints i-1 and i, and ``slopes[-1]`` right of the last breakpoint.
    Breakpoint values are accumulated in exact rational arithmetic.
    """

    dimension = 1

    def __init__(
        self,
        breakpoints: Sequence[float],
        slopes: Sequence[float],
        anchor_value: float,
        ball_convex: Optional[bool] = None,
        name: str = "pwl1d",
    ) -> None:
        if len(breakpoints) < 1:
            raise ProblemError("at least one breakpoint is required")
        if len(slopes) != len(breakpoints) + 1:
            raise ProblemError("number of slopes must be number of breakpoints + 1")
        if any(b >= a for b, a in zip(breakpoints, breakpoints[1:])) or any(
            not b < a for b, a in zip(breakpoints, breakpoints[1:])
        ):
            raise ProblemError("breakpoints must be strictly increasing")
        self.breakpoints = tuple(float(b) for b in breakpoints)
        self.slopes = tuple(float(s) for s in slopes)
        self.anchor_value = float(anchor_value)
        self.name = name

        exact = [Fraction(self.anchor_value)]
        for i in range(1, len(self.breakpoints)):
            gap = Fraction(self.breakpoints[i]) - Fraction(self.breakpoints[i - 1])
            exact.append(exact[-1] + Fraction(self.slopes[i]) * gap)
        self._exact_values = tuple(exact)
        self._values = tuple(float(v) for v in exact)
        self._ball_convex = ball_convex
        self.metadata = self._build_metadata()

    @property
    def bounded_below(self) -> bool:
        return self.slopes[0] <= 0 and self.slopes[-1] >= 0

    @property
    def convex(self) -> bool:
        return all(a <= b for a, b in zip(self.slopes, self.slopes[1:]))

    @property
    def ball_convex(self) -> bool:
        if self._ball_convex is not None:
            return self._ball_convex
        return self.convex

    @property
    def differentiable(self) -> bool:
        return False

    @property
    def breakpoint_values(self) -> tuple[float, ...]:
        return self._values

    def value(self, x: PointLike) -> float:
        return self.value_scalar(float(as_point(x, 1)[0]))

    def value_scalar(self, x: float) -> float:
        j = bisect_right(self.breakpoints, x)
        if j == 0:
            return self._values[0] + self.slopes[0] * (x - self.breakpoints[0])
        return self._values[j - 1] + self.slopes[j] * (x - self.breakpoints[j - 1])

    def value_exact(self, x: float) -> Fraction:
        """Value at x in rational arithmetic."""
        j = bisect_right(self.breakpoints, x)
        if j == 0:
            return self._exact_values[0] + Fraction(self.slopes[0]) * (
                Fraction(x) - Fraction(self.breakpoints[0])
            )
        return self._exact_values[j - 1] + Fraction(self.slopes[j]) * (
            Fraction(x) - Fraction(self.breakpoints[j - 1])
        )

    def side_slopes(self, x: float) -> tuple[float, float]:
        """(left slope, right slope) at x."""
        j = bisect_right(self.breakpoints, x)
        right = self.slopes[j]
        if j > 0 and self.breakpoints[j - 1] == x:
            return self.slopes[j - 1], right
        return right, right

    def is_breakpoint(self, x: float) -> bool:
        j = bisect_right(self.breakpoints, x)
        return j > 0 and self.breakpoints[j - 1] == x

    def gradient_with_flag(self, x: PointLike) -> tuple[np.ndarray, bool]:
        """Right-hand slope at x and whether x is a nonsmooth point."""
        value = float(as_point(x, 1)[0])
        _, right = self.side_slopes(value)
        return np.array([right]), self.is_breakpoint(value)

    def gradient(self, x: PointLike) -> np.ndarray:
        return self.gradient_with_flag(x)[0]

    def _build_metadata(self) -> ProblemMetadata:
        if not self.bounded_below:
            return ProblemMetadata()
        lowest = min(self._exact_values)
        intervals: list[tuple[float, float]] = []
        if self.slopes[0] == 0 and self._exact_values[0] == lowest:
            intervals.append((-np.inf, self.breakpoints[0]))
        for i, value in enumerate(self._exact_values):
            if value == lowest:
                intervals.append((self.breakpoints[i], self.breakpoints[i]))
            if (
                i + 1 < len(self.breakpoints)
                and self.slopes[i + 1] == 0
                and value == lowest
            ):
                intervals.append((self.breakpoints[i], self.breakpoints[i + 1]))
        if self.slopes[-1] == 0 and self._exact_values[-1] == lowest:
            intervals.append((self.breakpoints[-1], np.inf))
        return ProblemMetadata(
            minimizer_set=IntervalUnion(_merge_intervals(intervals)),
            f_star=float(lowest),
        )

    def __repr__(self) -> str:
        return f"PiecewiseLinear1D(breakpoints={list(self.breakpoints)}, slopes={list(self.slopes)})"


def _merge_intervals(intervals: list[tuple[float, float]]) -> list[tuple[float, float]]:
    merged: list[tuple[float, float]] = []
    for lo, hi in sorted(intervals):
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


class QuadraticProblem(ObjectiveProblem):
    """f(x) = 1/2 x^T A x + b^T x + c0 with symmetric A."""

    def __init__(
        self,
        matrix: Union[np.ndarray, Sequence[Sequence[float]]],
        linear: Optional[PointLike] = None,
        constant: float = 0.0,
        name: str = "quadratic",
    ) -> None:
        a = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ProblemError("matrix must be square")
        if np.max(np.abs(a - a.T), initial=0.0) > _SYMMETRY_TOL:
            raise ProblemError("matrix must be symmetric to 1e-12")
        self.matrix = 0.5 * (a + a.T)
        self.dimension = a.shape[0]
        if linear is None:
            linear = np.zeros(self.dimension)
        self.linear = as_point(linear, self.dimension)
        self.constant = float(constant)
        self.name = name
        self.eigenvalues, self.eigenvectors = linalg.eigh(self.matrix)
        self.metadata = self._build_metadata()

    @property
    def scale(self) -> float:
        return max(1.0, float(np.max(np.abs(self.eigenvalues))))

    @property
    def convex(self) -> bool:
        return bool(self.eigenvalues[0] >= -1e-12 * self.scale)

    def value(self, x: PointLike) -> float:
        point = as_point(x, self.dimension)
        return float(0.5 * point @ self.matrix @ point + self.linear @ point + self.constant)

    def gradient(self, x: PointLike) -> np.ndarray:
        point = as_point(x, self.dimension)
        return self.matrix @ point + self.linear

    def _build_metadata(self) -> ProblemMetadata:
        lipschitz = float(np.max(np.abs(self.eigenvalues)))
        if not self.convex:
            return ProblemMetadata(L=lipschitz)
        tol = 1e-10 * self.scale
        rank_mask = self.eigenvalues > tol
        projected = self.eigenvectors.T @ self.linear
        if np.any(np.abs(projected[~rank_mask]) > 1e-10 * (1.0 + np.linalg.norm(self.linear))):
            # b has a component in the null space of A: unbounded below
            return ProblemMetadata(L=lipschitz, mu=0.0)
        particular = -self.eigenvectors[:, rank_mask] @ (
            projected[rank_mask] / self.eigenvalues[rank_mask]
        )
        null_basis = self.eigenvectors[:, ~rank_mask]
        if null_basis.shape[1] == 0:
            minimizers: MinimizerSet = PointSet([particular])
        else:
            minimizers = AffineSet(particular, null_basis)
        return ProblemMetadata(
            minimizer_set=minimizers,
            f_star=self.value(particular),
            L=lipschitz,
            mu=float(max(self.eigenvalues[0], 0.0)),
        )

    def __repr__(self) -> str:
        return f"QuadraticProblem(d={self.dimension}, eig=[{self.eigenvalues[0]:.3g}, {self.eigenvalues[-1]:.3g}])"


class BlackBoxSmooth(ObjectiveProblem):
    """A smooth function known only through value (and optionally gradient) callables."""

    def __init__(
        self,
        value_fn: Callable[[np.ndarray], float],
        dimension: int,
        grad_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
        known_optimum: Optional[tuple[Sequence[PointLike], float]] = None,
        lipschitz: Optional[float] = None,
        convex: bool = False,
        name: str = "blackbox",
    ) -> None:
        if dimension < 1:
            raise ProblemError("dimension must be positive")
        self.dimension = dimension
        self.value_fn = value_fn
        self.grad_fn = grad_fn
        self.name = name
        self._convex = convex
        minimizer_set = None
        f_star = None
        if known_optimum is not None:
            points, f_star = known_optimum
            minimizer_set = PointSet([as_point(p, dimension) for p in points])
            for point in minimizer_set.points:
                if abs(self.value(point) - f_star) > _OPTIMUM_TOL:
                    raise ProblemError(
                        f"known optimum value {f_star} does not match f at {point.tolist()}"
                    )
        self.metadata = ProblemMetadata(
            minimizer_set=minimizer_set,
            f_star=None if f_star is None else float(f_star),
            L=lipschitz,
        )

    @property
    def convex(self) -> bool:
        return self._convex

    def value(self, x: PointLike) -> float:
        return float(self.value_fn(as_point(x, self.dimension)))

    def gradient(self, x: PointLike) -> np.ndarray:
        point = as_point(x, self.dimension)
        if self.grad_fn is not None:
            return np.asarray(self.grad_fn(point), dtype=np.float64)
        return central_difference(self.value_fn, point)

    def __repr__(self) -> str:
        return f"BlackBoxSmooth(name={self.name!r}, d={self.dimension})"


def central_difference(fn: Callable[[np.ndarray], float], x: np.ndarray) -> np.ndarray:
    """Central-difference gradient with step 1e-6 * (1 + ||x||)."""
    h = 1e-6 * (1.0 + float(np.linalg.norm(x)))
    grad = np.empty_like(x)
    for i in range(x.shape[0]):
        step = np.zeros_like(x)
        step[i] = h
        grad[i] = (fn(x + step) - fn(x - step)) / (2.0 * h)
    return grad


class FiniteSumProblem(ObjectiveProblem):
    """f = (1/n) sum_i f_i over clients sharing one dimension."""

    def __init__(
        self,
        clients: Sequence[ObjectiveProblem],
        metadata: Optional[ProblemMetadata] = None,
        name: str = "finite_sum",
    ) -> None:
        if len(clients) < 1:
            raise ProblemError("at least one client is required")
        dimensions = {c.dimension for c in clients}
        if len(dimensions) != 1:
            raise ProblemError("all clients must share a dimension")
        self.clients = tuple(clients)
        self.dimension = dimensions.pop()
        self.name = name
        self.metadata = metadata if metadata is not None else self._build_metadata()

    @property
    def n(self) -> int:
        return len(self.clients)

    @property
    def convex(self) -> bool:
        return all(c.convex for c in self.clients)

    @property
    def differentiable(self) -> bool:
        return all(c.differentiable for c in self.clients)

    @property
    def lipschitz_max(self) -> Optional[float]:
        constants = [c.lipschitz for c in self.clients]
        if any(L is None for L in constants):
            return None
        return float(max(constants))

    def value(self, x: PointLike) -> float:
        point = as_point(x, self.dimension)
        return float(np.mean([c.value(point) for c in self.clients]))

    def gradient(self, x: PointLike) -> np.ndarray:
        point = as_point(x, self.dimension)
        return np.mean([c.gradient(point) for c in self.clients], axis=0)

    def is_interpolating(self, tol: float = 1e-9) -> bool:
        """True when a known minimizer of f is stationary for every client."""
        if not isinstance(self.metadata.minimizer_set, PointSet):
            return False
        point = self.metadata.minimizer_set.points[0]
        return all(np.linalg.norm(c.gradient(point)) <= tol for c in self.clients)

    def as_quadratic(self) -> Optional[QuadraticProblem]:
        """The average as a single quadratic, when every client is quadratic."""
        if not all(isinstance(c, QuadraticProblem) for c in self.clients):
            return None
        quadratics = [c for c in self.clients if isinstance(c, QuadraticProblem)]
        return QuadraticProblem(
            np.mean([q.matrix for q in quadratics], axis=0),
            np.mean([q.linear for q in quadratics], axis=0),
            float(np.mean([q.constant for q in quadratics])),
            name=self.name,
        )

    def _build_metadata(self) -> ProblemMetadata:
        merged = self.as_quadratic()
        if merged is None:
            return ProblemMetadata()
        return merged.metadata

    def __repr__(self) -> str:
        return f"FiniteSumProblem(n={self.n}, d={self.dimension})"


class BregmanGenerator:
    """
    A strictly convex distance-generating function h.

    ``strict_convexity_witness`` is a lambda_min > 0 such that
    h - (lambda_min / 2) ||.||^2 is convex on the working ball.
    """

    def __init__(
        self,
        h_value: Callable[[np.ndarray], float],
        h_grad: Callable[[np.ndarray], np.ndarray],
        strict_convexity_witness: float,
        hessian: Optional[np.ndarray] = None,
        name: str = "bregman",
    ) -> None:
        if strict_convexity_witness <= 0:
            raise ProblemError("strict_convexity_witness must be positive")
        self.h_value = h_value
        self.h_grad = h_grad
        self.strict_convexity_witness = float(strict_convexity_witness)
        self.hessian = None if hessian is None else np.asarray(hessian, dtype=np.float64)
        self.name = name

    @classmethod
    def euclidean(cls, dimension: int) -> "BregmanGenerator":
        """h = 1/2 ||x||^2, so D_h(x, y) = 1/2 ||x - y||^2."""
        return cls.quadratic(np.eye(dimension), name="euclidean")

    @classmethod
    def quadratic(cls, matrix: Union[np.ndarray, Sequence[Sequence[float]]], name: str = "quadratic") -> "BregmanGenerator":
        """h = 1/2 x^T Q x for a symmetric positive definite Q."""
        q = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
        if np.max(np.abs(q - q.T), initial=0.0) > _SYMMETRY_TOL:
            raise ProblemError("Bregman matrix must be symmetric")
        smallest = float(linalg.eigvalsh(q)[0])
        if smallest <= 0:
            raise ProblemError("Bregman matrix must be positive definite")
        return cls(
            h_value=lambda x: float(0.5 * x @ q @ x),
            h_grad=lambda x: q @ x,
            strict_convexity_witness=smallest,
            hessian=q,
            name=name,
        )

    @property
    def is_quadratic(self) -> bool:
        return self.hessian is not None

    def divergence(self, x: np.ndarray, y: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        return float(self.h_value(x) - self.h_value(y) - np.dot(self.h_grad(y), x - y))

    @staticmethod
    def working_radius(center: np.ndarray) -> float:
        """Radius of the ball around center on which strict convexity is certified."""
        return 10.0 * (1.0 + float(np.linalg.norm(center)))

    def certify(self, center: np.ndarray, samples: int = 64, seed: int = 0) -> bool:
        """Probe D_h >= (lambda_min / 2) ||x - y||^2 on random pairs of the working ball."""
        if self.is_quadratic:
            return bool(linalg.eigvalsh(self.hessian)[0] >= self.strict_convexity_witness * (1 - 1e-12))
        center = np.asarray(center, dtype=np.float64)
        rng = np.random.default_rng(seed)
        radius = self.working_radius(center)
        for _ in range(samples):
            x = center + _uniform_in_ball(rng, center.shape[0], radius)
            y = center + _uniform_in_ball(rng, center.shape[0], radius)
            floor = 0.5 * self.strict_convexity_witness * float(np.sum((x - y) ** 2))
            if self.divergence(x, y) < floor - 1e-12 * (1.0 + floor):
                return False
        return True

    def __repr__(self) -> str:
        return f"BregmanGenerator(name={self.name!r}, witness={self.strict_convexity_witness:.3g})"


def _uniform_in_ball(rng: np.random.Generator, dimension: int, radius: float) -> np.ndarray:
    direction = rng.standard_normal(dimension)
    direction /= np.linalg.norm(direction)
    return direction * radius * rng.random() ** (1.0 / dimension)


def evaluate(problem: ObjectiveProblem, x: PointLike) -> float:
    """Exact value of the problem at x."""
    return problem.value(x)


def grad(problem: ObjectiveProblem, x: PointLike) -> np.ndarray:
    """Gradient of the problem at x (right-hand slope at PWL breakpoints)."""
    return problem.gradient(x)


def bregman_div(h: BregmanGenerator, x: PointLike, y: PointLike) -> float:
    """D_h(x, y) = h(x) - h(y) - <grad h(y), x - y>."""
    return h.divergence(np.atleast_1d(np.asarray(x, dtype=np.float64)), np.atleast_1d(np.asarray(y, dtype=np.float64)))
