"""
Tests for the theorem checks and grid scans.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from broxopt.envelope import EnvelopeHandle, run_gd_on_envelope
from broxopt.exceptions import OracleError, ProblemError, UnknownTheoremError
from broxopt.factories import RandomProblemFactory
from broxopt.methods import (
    run_abpm,
    run_bpm,
    run_bpm_pth,
    run_bregbpm,
    run_normalized_gd,
    run_ppm,
    run_sbpm,
)
from broxopt.problems import BlackBoxSmooth
from broxopt.schedules import RadiusSchedule
from broxopt.theory import (
    check_ball_convexity,
    check_brox_properties,
    check_weak_ball_convexity,
    count_far_iterates,
    parse_theorem_id,
    trace_tolerance,
    verify_all,
    verify_trace,
)
from broxopt.types import StopRule, TerminationReason, TheoremId, VerdictKind

from tests import suite_seeds

BPM_THEOREMS = [
    TheoremId.CONV_LIN_I,
    TheoremId.CONV_LIN_II,
    TheoremId.CONV_LIN_III,
    TheoremId.CONV_LIN_IV,
    TheoremId.CONV_LIN_V,
    TheoremId.COR_LIN_RATE,
    TheoremId.SUBLINEAR,
    TheoremId.WEAK_LIN,
    TheoremId.MULTIPLIER_DECR,
]


def _half(z: float) -> float:
    return 0.5 * z * z


class TestBpmGuarantees:
    """Tests for the BPM guarantees on recorded runs."""

    @pytest.mark.parametrize("theorem", BPM_THEOREMS)
    def test_half_square_passes(self, half_square, unit_radius, theorem):
        """Test every BPM guarantee on BPM for 1/2 x^2 from 5."""
        trace = run_bpm(half_square, 5.0, unit_radius)

        report = verify_trace(trace, half_square, theorem)

        assert report.verdict.kind == VerdictKind.PASS
        assert report.min_slack >= -report.tolerance_used

    @pytest.mark.parametrize("seed", range(4))
    @pytest.mark.parametrize("theorem", BPM_THEOREMS)
    def test_random_convex_quadratics_pass(self, seed, theorem):
        """Test the BPM guarantees on random convex quadratics."""
        problem = RandomProblemFactory.convex_quadratic(3, seed=seed)
        trace = run_bpm(problem, np.full(3, 6.0), RadiusSchedule.constant(0.8), StopRule(max_iter=60))

        report = verify_trace(trace, problem, theorem)

        assert report.verdict.ok

    def test_cor_lin_rate_tight_on_ball_convex(self, not_connected, unit_radius):
        """Test the running-distance rate on a ball-convex function."""
        trace = run_bpm(not_connected, -4.0, unit_radius)

        report = verify_trace(trace, not_connected, TheoremId.COR_LIN_RATE)

        assert report.verdict.kind == VerdictKind.PASS
        assert report.notes["form"] == "running_distance"
        assert report.min_slack == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("theorem", [TheoremId.SUBLINEAR, TheoremId.WEAK_LIN])
    def test_ball_convex_rates(self, not_connected, unit_radius, theorem):
        """Test the constant-radius rates on a ball-convex function."""
        trace = run_bpm(not_connected, -4.0, unit_radius)

        assert verify_trace(trace, not_connected, theorem).verdict.kind == VerdictKind.PASS

    def test_step_count_bound(self, half_square, unit_radius):
        """Test the bound on the number of steps to reach the optimum."""
        trace = run_bpm(half_square, 5.0, unit_radius)

        report = verify_trace(trace, half_square, TheoremId.CONV_LIN_III)

        assert report.notes["step_bound"] == 25

    def test_envelope_gd_is_checked_like_bpm(self, half_square):
        """Test that envelope GD traces go through the BPM guarantees."""
        trace = run_gd_on_envelope(EnvelopeHandle(half_square, 1.0), 5.0)

        assert verify_trace(trace, half_square, TheoremId.CONV_LIN_II).verdict.kind == VerdictKind.PASS


def _random_start(rng, center, lo, hi):
    direction = rng.standard_normal(center.shape[0])
    return center + direction / np.linalg.norm(direction) * rng.uniform(lo, hi)


class TestConvexSuite:
    """Constant-radius BPM on random convex problems against the convex guarantees."""

    def _check(self, problem, x0, t):
        trace = run_bpm(problem, x0, RadiusSchedule.constant(t), StopRule(max_iter=2000))
        reports = {r.theorem_id: r for r in verify_all(trace, problem, BPM_THEOREMS)}

        assert trace.terminated_reason == TerminationReason.OPTIMUM_REACHED
        assert all(report.verdict.ok for report in reports.values())
        assert reports[TheoremId.CONV_LIN_II].verdict.kind == VerdictKind.PASS
        assert reports[TheoremId.CONV_LIN_III].verdict.kind == VerdictKind.PASS
        assert reports[TheoremId.COR_LIN_RATE].verdict.kind == VerdictKind.PASS
        assert trace.num_steps <= reports[TheoremId.CONV_LIN_III].notes["step_bound"]

    @pytest.mark.parametrize("seed", suite_seeds(50))
    def test_convex_pwl(self, seed):
        """Test the guarantees and the step bound on a random convex piecewise-linear function."""
        rng = np.random.default_rng(seed)
        problem = RandomProblemFactory.convex_pwl(seed=500 + seed)

        # breakpoints lie in [-5, 5], so starts beyond 6 are at least 1 from the minimizers
        x0 = float(rng.choice([-1.0, 1.0]) * rng.uniform(6.0, 9.0))

        self._check(problem, [x0], float(rng.uniform(0.25, 0.9)))

    @pytest.mark.parametrize("seed", suite_seeds(50))
    def test_convex_quadratic(self, seed):
        """Test the guarantees and the step bound on a random convex quadratic of dimension at most 5."""
        rng = np.random.default_rng(seed)
        problem = RandomProblemFactory.convex_quadratic(1 + seed % 5, seed=600 + seed)
        center = problem.metadata.minimizer_set.representatives()[0]

        self._check(problem, _random_start(rng, center, 2.5, 6.0), float(rng.uniform(0.5, 2.0)))


class TestAcceleratedSuite:
    """Accelerated and higher-order runs on random convex quadratics."""

    @pytest.mark.parametrize("seed", suite_seeds(20))
    def test_abpm_rate_up_to_hundred_steps(self, seed):
        """Test f(y_K) - f_star <= 2 L d0^2 / (K (K + 1)) for every K <= 100."""
        rng = np.random.default_rng(seed)
        problem = RandomProblemFactory.convex_quadratic(1 + seed % 5, seed=700 + seed)
        center = problem.metadata.minimizer_set.representatives()[0]

        trace = run_abpm(problem, _random_start(rng, center, 1.0, 8.0), StopRule(max_iter=100))
        report = verify_trace(trace, problem, TheoremId.ABPM_RATE)

        assert trace.num_steps <= 100
        assert report.verdict.kind == VerdictKind.PASS

    @pytest.mark.parametrize("p", [2, 3])
    @pytest.mark.parametrize("dimension", [1, 2])
    def test_pth_order_rate(self, p, dimension):
        """Test the p-th order residuals and decay for p = 2 and p = 3."""
        problem = RandomProblemFactory.convex_quadratic(dimension, seed=800 + dimension)
        x0 = problem.metadata.minimizer_set.representatives()[0] + np.full(dimension, 3.0)

        trace = run_bpm_pth(problem, x0, gamma=1.0, p=p, stop=StopRule(max_iter=60))
        report = verify_trace(trace, problem, TheoremId.PPMP_RATE)

        assert report.verdict.kind == VerdictKind.PASS
        assert trace.info["p"] == p
        assert trace.final.f < trace[0].f


class TestCorruptedTraces:
    """Tests that hand-made violating traces are caught at the right step."""

    def test_short_step_fails_conv_lin_ii(self, half_square, build_trace):
        """Test that a step shorter than the radius is flagged."""
        trace = build_trace("bpm", [5.0, 4.0, 3.5, 2.5], _half, 1.0, dist=abs)

        report = verify_trace(trace, half_square, TheoremId.CONV_LIN_II)

        assert report.verdict.kind == VerdictKind.FAIL
        assert report.verdict.first_violation == 1

    def test_missed_landing_fails_conv_lin_i(self, half_square, build_trace):
        """Test that not landing on the minimizer from within reach is flagged."""
        trace = build_trace("bpm", [5.0, 4.0, 3.0, 2.0, 1.0, 0.5], _half, 1.0, dist=abs)

        report = verify_trace(trace, half_square, TheoremId.CONV_LIN_I)

        assert report.verdict.kind == VerdictKind.FAIL
        assert report.verdict.first_violation == 4

    def test_slow_decrease_fails_conv_lin_iv(self, half_square, build_trace):
        """Test that too little decrease of f is flagged."""
        trace = build_trace("bpm", [5.0, 4.0, 3.9], _half, 1.0, dist=abs)

        report = verify_trace(trace, half_square, TheoremId.CONV_LIN_IV)

        assert report.verdict.first_violation == 1

    def test_rising_gradient_fails_conv_lin_v(self, half_square, build_trace):
        """Test that growing gradient norms are flagged."""
        trace = build_trace("bpm", [5.0, 4.0, 4.5], _half, 1.0, dist=abs)
        for row, value in zip(trace.steps, (4.0, 4.5)):
            row.grad_norm_next = value

        report = verify_trace(trace, half_square, TheoremId.CONV_LIN_V)

        assert report.verdict.first_violation == 1

    def test_tolerance_grows_with_residual(self, half_square, build_trace):
        """Test that oracle residuals widen the tolerance."""
        trace = build_trace("bpm", [5.0, 4.0], _half, 1.0, dist=abs)
        trace[0].residual = 1e-6

        assert trace_tolerance(trace) == pytest.approx(1e-9 + 1e-5)


class TestGating:
    """Tests that unmet hypotheses give skipped verdicts."""

    def test_nonconvex_skipped(self, not_connected, unit_radius):
        """Test that convex-only guarantees skip on a nonconvex problem."""
        trace = run_bpm(not_connected, -4.0, unit_radius)

        report = verify_trace(trace, not_connected, TheoremId.CONV_LIN_II)

        assert report.verdict.kind == VerdictKind.SKIPPED
        assert "not convex" in report.verdict.reason
        assert report.per_step_slacks == []

    def test_camel_skipped(self, camel):
        """Test that no BPM guarantee applies on the camel function."""
        trace = run_bpm(camel, [1.0, 1.0], RadiusSchedule.constant(1.0), StopRule(max_iter=3))

        for theorem in (TheoremId.CONV_LIN_II, TheoremId.COR_LIN_RATE):
            assert verify_trace(trace, camel, theorem).verdict.kind == VerdictKind.SKIPPED

    def test_nonsmooth_skips_gradient_check(self, absolute_value, unit_radius):
        """Test that the gradient guarantee needs differentiability."""
        trace = run_bpm(absolute_value, 5.0, unit_radius)

        report = verify_trace(trace, absolute_value, TheoremId.CONV_LIN_V)

        assert report.verdict.kind == VerdictKind.SKIPPED
        assert verify_trace(trace, absolute_value, TheoremId.CONV_LIN_II).verdict.kind == VerdictKind.PASS

    def test_wrong_method_skipped(self, half_square, unit_radius):
        """Test that a guarantee skips traces of other methods."""
        trace = run_ppm(half_square, 4.0, unit_radius, StopRule(max_iter=3))

        report = verify_trace(trace, half_square, TheoremId.CONV_LIN_I)

        assert report.verdict.kind == VerdictKind.SKIPPED
        assert "ppm" in report.verdict.reason

    def test_varying_radius_skips_constant_radius_checks(self, half_square):
        """Test that constant-radius guarantees skip explicit schedules."""
        trace = run_bpm(half_square, 10.0, RadiusSchedule.explicit([4, 3, 2]), StopRule(max_iter=3))

        assert verify_trace(trace, half_square, TheoremId.SUBLINEAR).verdict.kind == VerdictKind.SKIPPED
        assert verify_trace(trace, half_square, TheoremId.CONV_LIN_II).verdict.kind == VerdictKind.PASS

    def test_no_applicable_steps(self, half_square, unit_radius):
        """Test that a run never within reach of the optimum has nothing to check."""
        trace = run_bpm(half_square, 5.0, unit_radius, StopRule(max_iter=2))

        report = verify_trace(trace, half_square, TheoremId.CONV_LIN_I)

        assert report.verdict.kind == VerdictKind.SKIPPED
        assert report.verdict.reason == "no applicable steps"

    def test_unknown_theorem(self, half_square, unit_radius):
        """Test that an unknown id raises UnknownTheoremError."""
        trace = run_bpm(half_square, 1.0, unit_radius)

        with pytest.raises(UnknownTheoremError):
            verify_trace(trace, half_square, "NO_SUCH_THEOREM")

    def test_ids_are_case_insensitive(self):
        """Test that lowercase theorem ids are accepted."""
        assert parse_theorem_id("conv_lin_ii") == TheoremId.CONV_LIN_II
        assert parse_theorem_id(TheoremId.ABPM_RATE) == TheoremId.ABPM_RATE


class TestVariantGuarantees:
    """Tests for the guarantees of the BPM variants."""

    def test_sbpm(self, orthogonal_valley):
        """Test the stochastic descent and rate guarantees."""
        trace = run_sbpm(orthogonal_valley, [3.0, 4.0], 1.0, StopRule(max_iter=200), seed=1)

        for report in verify_all(trace, orthogonal_valley, ["SBPM_DESCENT", "SBPM_RATE"]):
            assert report.verdict.kind == VerdictKind.PASS
        assert "realized_trace" in verify_trace(trace, orthogonal_valley, "SBPM_RATE").notes

    def test_sbpm_projection_descent_is_tight(self, orthogonal_valley):
        """Test that a projection step attains the descent inequality."""
        trace = run_sbpm(orthogonal_valley, [3.0, 4.0], 5.0, StopRule(max_iter=1), seed=0)

        report = verify_trace(trace, orthogonal_valley, TheoremId.SBPM_DESCENT)

        assert report.verdict.kind == VerdictKind.PASS
        assert report.min_slack == pytest.approx(0.0, abs=1e-12)

    def test_unprojected_sbpm_wanders(self, orthogonal_valley):
        """Test that the farthest-point variant keeps leaving the minimizer."""
        trace = run_sbpm(orthogonal_valley, [3.0, 4.0], 5.0, StopRule(max_iter=200), seed=0, projected=False)

        assert count_far_iterates(trace) >= 100
        assert verify_trace(trace, orthogonal_valley, "SBPM_DESCENT").verdict.kind == VerdictKind.SKIPPED

    def test_abpm(self, half_square):
        """Test the accelerated rate on 1/2 x^2."""
        trace = run_abpm(half_square, 4.0, StopRule(max_iter=10))

        report = verify_trace(trace, half_square, TheoremId.ABPM_RATE)

        assert report.verdict.kind == VerdictKind.PASS
        assert report.notes["L"] == 1.0
        assert report.notes["sequence"] == "y"
        assert report.notes["aux_max_ratio"] >= 0.0

    def test_pth_order(self, half_square):
        """Test the p-th order guarantee on 1/2 x^2."""
        trace = run_bpm_pth(half_square, 4.0, gamma=1.0, p=2, stop=StopRule(max_iter=30))

        assert verify_trace(trace, half_square, TheoremId.PPMP_RATE).verdict.kind == VerdictKind.PASS

    def test_bregman(self, half_square_2d, elliptic_h):
        """Test the Bregman rate with and without the generator."""
        trace = run_bregbpm(half_square_2d, elliptic_h, [3.0, 4.0], 1.0, StopRule(max_iter=50))

        report = verify_trace(trace, half_square_2d, TheoremId.BREG_RATE, h=elliptic_h)

        assert report.verdict.kind == VerdictKind.PASS
        assert report.notes["divergence"] == pytest.approx(17.0)
        assert verify_trace(trace, half_square_2d, TheoremId.BREG_RATE).verdict.kind == VerdictKind.SKIPPED

    def test_normalized_gd_neighbourhood(self, half_square, unit_radius):
        """Test the constant-radius neighbourhood guarantee."""
        trace = run_normalized_gd(half_square, 4.5, unit_radius, StopRule(max_iter=40))

        assert verify_trace(trace, half_square, TheoremId.NGD_NBHD).verdict.kind == VerdictKind.PASS

    def test_normalized_gd_polyak(self, half_square, unit_radius):
        """Test the adaptive-radius guarantee and its gating on the schedule."""
        polyak = run_normalized_gd(half_square, 4.0, RadiusSchedule.polyak_for(half_square), StopRule(max_iter=20))
        constant = run_normalized_gd(half_square, 4.0, unit_radius, StopRule(max_iter=3))

        assert verify_trace(polyak, half_square, TheoremId.NGD_ADA).verdict.kind == VerdictKind.PASS
        assert verify_trace(constant, half_square, TheoremId.NGD_ADA).verdict.kind == VerdictKind.SKIPPED

    def test_ppm_contraction(self, half_square, unit_radius):
        """Test the proximal contraction on a strongly convex function."""
        trace = run_ppm(half_square, 4.0, unit_radius, StopRule(max_iter=10))

        assert verify_trace(trace, half_square, TheoremId.PPM_CONTRACTION).verdict.kind == VerdictKind.PASS


class TestBallConvexityScan:
    """Tests for check_ball_convexity and check_weak_ball_convexity."""

    def test_not_connected_is_ball_convex(self, not_connected, line_grid):
        """Test the ball-convexity inequality at t = 1."""
        report = check_ball_convexity(not_connected, 1.0, line_grid, line_grid)

        assert report.verdict.kind == VerdictKind.PASS
        assert report.tested_pairs >= len(line_grid) ** 2
        assert report.c_values[(-4.0,)] == 1.0
        assert report.c_values[(2.0,)] == 0.0

    def test_two_well_witness(self, two_well, line_grid):
        """Test that a small radius exposes the local well."""
        report = check_ball_convexity(two_well, 0.5, line_grid, line_grid)

        assert report.verdict.kind == VerdictKind.FAIL
        x, y, u, slack = check_ball_convexity(two_well, 0.5, [4.0], [0.0]).witness
        assert (x.tolist(), y.tolist(), u.tolist()) == ([4.0], [0.0], [4.0])
        assert slack == pytest.approx(-1.0)

    def test_inexact_oracle_refused(self, camel):
        """Test that the scan refuses approximate oracles."""
        with pytest.raises(OracleError):
            check_ball_convexity(camel, 1.0, [[0.0, 0.0]], [[0.0, 0.0]])

    @settings(max_examples=25)
    @given(st.integers(min_value=0, max_value=10_000), st.floats(min_value=0.1, max_value=3.0))
    def test_convex_implies_ball_convex(self, seed, t):
        """Test that random convex functions pass the scan for every radius."""
        f = RandomProblemFactory.convex_pwl(seed=seed)
        grid = [float(v) for v in np.linspace(-6.0, 6.0, 25)]

        assert check_ball_convexity(f, t, grid, grid).verdict.kind == VerdictKind.PASS

    def test_weak_inequalities(self, not_connected, line_grid):
        """Test the weak inequalities against a designated minimizer."""
        report = check_weak_ball_convexity(not_connected, 1.0, line_grid, x_star=-1.0)

        assert report.verdict.kind == VerdictKind.PASS

    def test_weak_needs_optimal_value(self):
        """Test that an unknown optimum is refused."""
        problem = BlackBoxSmooth(lambda x: float(x[0] ** 2), dimension=1)

        with pytest.raises(ProblemError):
            check_weak_ball_convexity(problem, 1.0, [0.0])


class TestBroxProperties:
    """Tests for check_brox_properties."""

    def test_not_connected_unit_radius(self, not_connected, line_grid):
        """Test all operator properties on a ball-convex function."""
        report = check_brox_properties(not_connected, 1.0, line_grid)

        assert report.verdict.kind == VerdictKind.PASS
        assert report.checked["single_valued"] > 0
        assert report.checked["convex_combination"] == 15

    def test_convex_quadratic(self, half_square_2d):
        """Test the properties on 1/2 ||z||^2 over a planar grid."""
        grid = [[a, b] for a in np.linspace(-3, 3, 7) for b in np.linspace(-3, 3, 7)]

        assert check_brox_properties(half_square_2d, 0.75, grid).verdict.kind == VerdictKind.PASS

    def test_small_radius_breaks_minimizer_combinations(self, not_connected, line_grid):
        """Test that the midpoint of the minimizers is not optimal for small t."""
        report = check_brox_properties(not_connected, 0.5, line_grid)

        assert report.verdict.kind == VerdictKind.FAIL
        assert report.violations["convex_combination"]

    def test_needs_metadata(self):
        """Test that the scan needs minimizers and an optimal value."""
        problem = BlackBoxSmooth(lambda x: float(x[0] ** 2), dimension=1)

        with pytest.raises(ProblemError):
            check_brox_properties(problem, 1.0, [0.0])
