"""
Factories for built-in and randomly generated objective problems.
"""

from typing import Optional

import numpy as np

from broxopt.problems import (
    BlackBoxSmooth,
    FiniteSumProblem,
    PiecewiseLinear1D,
    QuadraticProblem,
)

# Global minimizers of the six-hump camel function
CAMEL_MINIMIZERS = (
    (0.08984201368301331, -0.7126564032704135),
    (-0.08984201368301331, 0.7126564032704135),
)
# Reported optimal value, the success target of the camel experiment
CAMEL_F_STAR = -1.0316


def camel_value(x: np.ndarray) -> float:
    """Six-hump camel function."""
    a, b = float(x[0]), float(x[1])
    a2 = a * a
    b2 = b * b
    return (4.0 - 2.1 * a2 + a2 * a2 / 3.0) * a2 + a * b + (-4.0 + 4.0 * b2) * b2


def camel_gradient(x: np.ndarray) -> np.ndarray:
    a, b = float(x[0]), float(x[1])
    a2 = a * a
    return np.array(
        [
            8.0 * a - 8.4 * a2 * a + 2.0 * a2 * a2 * a + b,
            a - 8.0 * b + 16.0 * b * b * b,
        ]
    )


class ProblemFactory:
    """Factory for the named problems used by tests and experiments."""

    @classmethod
    def six_hump_camel(cls) -> BlackBoxSmooth:
        """Six-hump camel with analytic gradient and both global minimizers."""
        f_star = camel_value(np.array(CAMEL_MINIMIZERS[0]))
        return BlackBoxSmooth(
            camel_value,
            dimension=2,
            grad_fn=camel_gradient,
            known_optimum=([np.array(p) for p in CAMEL_MINIMIZERS], f_star),
            name="camel",
        )

    @classmethod
    def not_connected(cls) -> PiecewiseLinear1D:
        """
        Nonconvex function with disconnected minimizers {-1, 1}.

        f(x) = -x - 1 for x <= -1, x + 1 on [-1, 0], 1 - x on [0, 1], x - 1 for x >= 1.
        It is B_t-convex for t = 1.
        """
        return PiecewiseLinear1D(
            breakpoints=[-1.0, 0.0, 1.0],
            slopes=[-1.0, 1.0, -1.0, 1.0],
            anchor_value=0.0,
            ball_convex=True,
            name="not_connected",
        )

    @classmethod
    def two_well(cls) -> PiecewiseLinear1D:
        """Global minimum -2 at 0, ridge 0 at 2, local minimum -1 at 4."""
        return PiecewiseLinear1D(
            breakpoints=[0.0, 2.0, 4.0],
            slopes=[-1.0, 1.0, -0.5, 1.0],
            anchor_value=-2.0,
            ball_convex=False,
            name="two_well",
        )

    @classmethod
    def absolute_value(cls) -> PiecewiseLinear1D:
        return PiecewiseLinear1D([0.0], [-1.0, 1.0], 0.0, name="abs")

    @classmethod
    def half_square(cls, dimension: int = 1) -> QuadraticProblem:
        """f(x) = 1/2 ||x||^2."""
        return QuadraticProblem(np.eye(dimension), name="half_square")

    @classmethod
    def orthogonal_valley(cls) -> FiniteSumProblem:
        """Clients x^2 and y^2 with the common minimizer at the origin."""
        return FiniteSumProblem(
            [
                QuadraticProblem(np.diag([2.0, 0.0]), name="valley_x"),
                QuadraticProblem(np.diag([0.0, 2.0]), name="valley_y"),
            ],
            name="orthogonal_valley",
        )


class RandomProblemFactory:
    """Seeded random instances; without an explicit seed a counter advances per call."""

    _seed_counter = 1000

    @classmethod
    def _next_rng(cls, seed: Optional[int]) -> np.random.Generator:
        if seed is None:
            seed = cls._seed_counter
            cls._seed_counter += 1
        return np.random.default_rng(seed)

    @classmethod
    def convex_pwl(cls, seed: Optional[int] = None, max_breakpoints: int = 6) -> PiecewiseLinear1D:
        """Convex piecewise-linear function bounded below."""
        rng = cls._next_rng(seed)
        count = int(rng.integers(1, max_breakpoints + 1))
        # dyadic grid keeps breakpoints distinct and exactly representable
        grid = rng.choice(np.arange(-320, 321), size=count, replace=False) / 64.0
        breakpoints = sorted(float(b) for b in grid)
        inner = sorted(float(s) for s in rng.uniform(-3.0, 3.0, size=count - 1))
        slopes = (
            [-float(rng.uniform(0.25, 3.0))]
            + inner
            + [float(rng.uniform(0.25, 3.0))]
        )
        slopes = sorted(slopes)
        return PiecewiseLinear1D(
            breakpoints,
            slopes,
            anchor_value=float(rng.uniform(-2.0, 2.0)),
            name="random_convex_pwl",
        )

    @classmethod
    def convex_quadratic(
        cls,
        dimension: int,
        seed: Optional[int] = None,
        eigenvalue_range: tuple[float, float] = (0.5, 5.0),
    ) -> QuadraticProblem:
        """Strongly convex quadratic with a random rotation and linear term."""
        rng = cls._next_rng(seed)
        eigenvalues = rng.uniform(*eigenvalue_range, size=dimension)
        return cls._rotated(rng, eigenvalues, rng.standard_normal(dimension), "random_convex_quadratic")

    @classmethod
    def indefinite_quadratic(
        cls,
        dimension: int,
        seed: Optional[int] = None,
        hard_case: bool = False,
    ) -> QuadraticProblem:
        """
        Quadratic with a negative smallest eigenvalue.

        With ``hard_case`` the linear term is orthogonal to the leading
        eigenvector, so at the origin the gradient has no component there.
        """
        rng = cls._next_rng(seed)
        eigenvalues = np.sort(rng.uniform(-2.0, 3.0, size=dimension))
        eigenvalues[0] = -float(rng.uniform(0.5, 2.0))
        if dimension > 1:
            eigenvalues[1:] = np.maximum(eigenvalues[1:], eigenvalues[0] + 0.5)
        coefficients = rng.standard_normal(dimension)
        if hard_case:
            coefficients[0] = 0.0
            coefficients *= 0.1
        return cls._rotated(rng, eigenvalues, coefficients, "random_indefinite_quadratic")

    @classmethod
    def _rotated(
        cls,
        rng: np.random.Generator,
        eigenvalues: np.ndarray,
        coefficients: np.ndarray,
        name: str,
    ) -> QuadraticProblem:
        dimension = eigenvalues.shape[0]
        rotation, _ = np.linalg.qr(rng.standard_normal((dimension, dimension)))
        matrix = rotation @ np.diag(eigenvalues) @ rotation.T
        matrix = 0.5 * (matrix + matrix.T)
        return QuadraticProblem(matrix, rotation @ coefficients, name=name)

    @classmethod
    def reset_counter(cls) -> None:
        """Reset the seed counter."""
        cls._seed_counter = 1000
