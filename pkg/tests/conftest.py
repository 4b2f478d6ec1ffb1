"""
Pytest configuration and shared fixtures.
"""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from broxopt.factories import ProblemFactory, RandomProblemFactory
from broxopt.oracles import BroxOracle
from broxopt.problems import BregmanGenerator, PiecewiseLinear1D, QuadraticProblem
from broxopt.schedules import RadiusSchedule
from broxopt.trace import IterateTrace

# The autouse counter reset is function scoped and harmless across examples
settings.register_profile(
    "broxopt",
    suppress_health_check=[HealthCheck.function_scoped_fixture],
    deadline=None,
)
settings.load_profile("broxopt")


@pytest.fixture(autouse=True)
def reset_factories():
    """Reset the random problem seed counter before and after each test."""
    RandomProblemFactory.reset_counter()
    yield
    RandomProblemFactory.reset_counter()


@pytest.fixture
def oracle() -> BroxOracle:
    """Provide a fresh dispatching oracle."""
    return BroxOracle()


@pytest.fixture
def half_square() -> QuadraticProblem:
    """f(x) = x^2 / 2 on the line."""
    return ProblemFactory.half_square(1)


@pytest.fixture
def half_square_2d() -> QuadraticProblem:
    """f(z) = ||z||^2 / 2 in the plane."""
    return ProblemFactory.half_square(2)


@pytest.fixture
def not_connected() -> PiecewiseLinear1D:
    return ProblemFactory.not_connected()


@pytest.fixture
def two_well() -> PiecewiseLinear1D:
    return ProblemFactory.two_well()


@pytest.fixture
def absolute_value() -> PiecewiseLinear1D:
    return ProblemFactory.absolute_value()


@pytest.fixture
def camel():
    return ProblemFactory.six_hump_camel()


@pytest.fixture
def orthogonal_valley():
    return ProblemFactory.orthogonal_valley()


@pytest.fixture
def elliptic_h() -> BregmanGenerator:
    """h(x) = x^T diag(2, 1) x / 2."""
    return BregmanGenerator.quadratic(np.diag([2.0, 1.0]))


@pytest.fixture
def unit_radius() -> RadiusSchedule:
    return RadiusSchedule.constant(1.0)


@pytest.fixture
def line_grid() -> list[float]:
    """Quarter-step grid covering [-5, 5]."""
    return [float(v) for v in np.arange(-20, 21) / 4.0]


def _build_trace(method: str, points: list[float], f, radius: float, dist=None) -> IterateTrace:
    trace = IterateTrace(method, dimension=1)
    trace.start(np.array([points[0]]), f(points[0]), None if dist is None else dist(points[0]))
    for a, b in zip(points, points[1:]):
        trace.add_step(
            np.array([b]),
            f(b),
            t=radius,
            step_len=abs(b - a),
            c=0.0,
            dist_next=None if dist is None else dist(b),
            residual=0.0,
        )
    return trace


@pytest.fixture
def build_trace():
    """Builder of hand-made 1-D traces with constant radius, for corrupting in tests."""
    return _build_trace
