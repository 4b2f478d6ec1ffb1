"""
Tests for problem specs, run configs and environment settings.
"""

import json

import numpy as np
import pytest

from broxopt.config import (
    ENV_LOG_LEVEL,
    ENV_THREADS,
    ExperimentConfig,
    ExperimentKind,
    MethodId,
    Settings,
    load_problem,
    parse_json,
    problem_from_spec,
    problem_to_spec,
    schedule_from_spec,
)
from broxopt.exceptions import ConfigError
from broxopt.factories import ProblemFactory
from broxopt.problems import AffineSet, FiniteSumProblem, IntervalUnion, PiecewiseLinear1D, QuadraticProblem
from broxopt.types import ScheduleKind, TheoremId


class TestParseJson:
    """Tests for JSON syntax errors."""

    def test_line_of_syntax_error(self):
        """Test that a syntax error reports its line."""
        with pytest.raises(ConfigError, match="line 3") as exc_info:
            parse_json('{\n  "experiment": "solve",\n  "x0": [1,,2]\n}')

        assert exc_info.value.line == 3

    def test_missing_file(self, tmp_path):
        """Test that an unreadable file is a config error."""
        with pytest.raises(ConfigError, match="cannot read"):
            load_problem(tmp_path / "absent.json")


class TestProblemSpecs:
    """Tests for problem_from_spec and problem_to_spec."""

    def test_builtin(self):
        """Test the named built-in problems."""
        problem = problem_from_spec({"type": "two_well"})

        assert isinstance(problem, PiecewiseLinear1D)
        assert problem.f_star == -2.0

    def test_quadratic(self):
        """Test a quadratic with a linear term."""
        problem = problem_from_spec({"type": "quadratic", "matrix": [[2.0, 0.0], [0.0, 1.0]], "linear": [-2.0, 0.0]})

        assert isinstance(problem, QuadraticProblem)
        assert problem.f_star == pytest.approx(-1.0)
        assert problem.metadata.minimizer_set.points[0] == pytest.approx([1.0, 0.0])

    def test_finite_sum_clients_report_their_path(self):
        """Test that a bad client names its position in the error."""
        spec = {"type": "finite_sum", "clients": [{"type": "quadratic", "matrix": [[1.0]]}, {"matrix": [[1.0]]}]}

        with pytest.raises(ConfigError) as exc_info:
            problem_from_spec(spec)

        assert exc_info.value.field == "clients[1].type"

    def test_finite_sum(self):
        """Test a finite sum of two clients."""
        problem = problem_from_spec({"type": "orthogonal_valley"})

        assert isinstance(problem, FiniteSumProblem)
        assert problem.n == 2

    @pytest.mark.parametrize(
        "spec, field",
        [
            ({}, "type"),
            ({"type": "cubic"}, "type"),
            ({"type": "pwl1d", "breakpoints": [0.0]}, "slopes"),
            ({"type": "pwl1d", "breakpoints": [0.0], "slopes": [1.0]}, "problem"),
            ({"type": "quadratic", "matrix": [1.0, 2.0]}, "matrix"),
            ({"type": "quadratic", "matrix": [[1.0]], "metadata": {"f_star": "low"}}, "metadata.f_star"),
            ({"type": "quadratic", "matrix": [[1.0]], "metadata": {"minimizer_set": {"kind": "disk"}}},
             "metadata.minimizer_set.kind"),
        ],
    )
    def test_invalid_specs(self, spec, field):
        """Test that invalid specs name the offending field."""
        with pytest.raises(ConfigError) as exc_info:
            problem_from_spec(spec)

        assert exc_info.value.field == field

    def test_metadata_override(self):
        """Test that consistent metadata replaces the computed one."""
        spec = {
            "type": "pwl1d",
            "breakpoints": [-1.0, 1.0],
            "slopes": [-1.0, 0.0, 1.0],
            "metadata": {"minimizer_set": {"kind": "intervals", "intervals": [[-1.0, 1.0]]}, "f_star": 0.0},
        }

        problem = problem_from_spec(spec)

        assert isinstance(problem.metadata.minimizer_set, IntervalUnion)

    def test_metadata_mismatch(self):
        """Test that f_star disagreeing with f at the minimizers is refused."""
        spec = {
            "type": "quadratic",
            "matrix": [[1.0]],
            "metadata": {"f_star": 1.0, "minimizer_set": {"kind": "points", "points": [[0.0]]}},
        }

        with pytest.raises(ConfigError, match="disagrees") as exc_info:
            problem_from_spec(spec)

        assert exc_info.value.field == "metadata.f_star"

    def test_affine_minimizers(self):
        """Test an affine minimizer set in a spec."""
        spec = {
            "type": "quadratic",
            "matrix": [[1.0, 0.0], [0.0, 0.0]],
            "metadata": {
                "f_star": 0.0,
                "minimizer_set": {"kind": "affine", "point": [0.0, 0.0], "basis": [[0.0], [1.0]]},
            },
        }

        problem = problem_from_spec(spec)

        assert isinstance(problem.metadata.minimizer_set, AffineSet)
        assert problem.distance_to_optimum(np.array([3.0, 7.0])) == pytest.approx(3.0)

    @pytest.mark.parametrize("name", ["not_connected", "two_well", "orthogonal_valley", "six_hump_camel"])
    def test_builtin_specs_read_back(self, name):
        """Test that built-in problems keep their short spec."""
        problem = getattr(ProblemFactory, name)()

        again = problem_from_spec(problem_to_spec(problem))

        assert again.name == problem.name

    def test_quadratic_spec_reads_back(self):
        """Test that a quadratic spec reproduces the function."""
        problem = QuadraticProblem(np.array([[2.0, 1.0], [1.0, 3.0]]), [1.0, -1.0], 0.5, name="q")

        again = problem_from_spec(json.loads(json.dumps(problem_to_spec(problem))))

        x = np.array([0.3, -1.2])
        assert again.value(x) == pytest.approx(problem.value(x))
        assert again.name == "q"


class TestSchedules:
    """Tests for schedule_from_spec."""

    def test_polyak_from_problem(self, half_square):
        """Test that a Polyak schedule takes f_star from the problem."""
        schedule = schedule_from_spec({"kind": "polyak"}, half_square)

        assert schedule.kind == ScheduleKind.POLYAK
        assert schedule.f_star_hint == 0.0

    def test_polyak_without_problem(self):
        """Test that a Polyak schedule without any optimum is refused."""
        with pytest.raises(ConfigError) as exc_info:
            schedule_from_spec({"kind": "polyak"})

        assert exc_info.value.field == "schedule.f_star"

    @pytest.mark.parametrize(
        "spec, field",
        [
            ({"kind": "spiral"}, "schedule.kind"),
            ({"kind": "constant"}, "schedule.t"),
            ({"kind": "constant", "t": -1.0}, "schedule"),
            ({"kind": "explicit_list", "t_list": ["a"]}, "schedule.t_list"),
        ],
    )
    def test_invalid(self, spec, field):
        """Test that invalid schedules name their field."""
        with pytest.raises(ConfigError) as exc_info:
            schedule_from_spec(spec)

        assert exc_info.value.field == field


class TestExperimentConfig:
    """Tests for run configs."""

    def test_defaults(self):
        """Test the defaults of a minimal config."""
        config = ExperimentConfig.from_dict({"experiment": "fig1"})

        assert config.experiment == ExperimentKind.FIG1
        assert config.method == MethodId.BPM
        assert config.replicates == 1
        assert config.stop.max_iter == 1000
        assert config.budget.max_evaluations == 20000
        assert config.grid == (-5.0, 5.0, 101)

    def test_full(self):
        """Test every field of a solve config."""
        config = ExperimentConfig.from_dict(
            {
                "experiment": "solve",
                "problem": {"type": "quadratic", "matrix": [[1.0]]},
                "method": "normalized_gd",
                "schedule": {"kind": "explicit_list", "t_list": [2.0, 1.0]},
                "stop": {"max_iter": 20},
                "seed": 7,
                "replicates": 3,
                "verify": ["ngd_nbhd"],
                "budget": {"restarts": 4},
                "x0": 5.0,
            }
        )

        assert config.seeds == [7, 8, 9]
        assert config.verify == [TheoremId.NGD_NBHD]
        assert config.budget.restarts == 4
        assert config.budget.rng_seed == 7
        assert config.x0 == [5.0]
        assert config.build_problem().dimension == 1
        assert config.build_schedule().radius(5) == 1.0

    def test_problem_file_relative_to_config(self, tmp_path):
        """Test that a problem path is resolved next to the config file."""
        (tmp_path / "problem.json").write_text(json.dumps({"type": "not_connected"}))
        (tmp_path / "run.json").write_text(json.dumps({"experiment": "solve", "problem": "problem.json"}))

        config = ExperimentConfig.load(tmp_path / "run.json")

        assert config.build_problem().name == "not_connected"

    @pytest.mark.parametrize(
        "data, field",
        [
            ({}, "experiment"),
            ({"experiment": "dance"}, "experiment"),
            ({"experiment": "solve", "method": "newton"}, "method"),
            ({"experiment": "solve", "verify": ["CONV_LIN_II", "NOPE"]}, "verify[1]"),
            ({"experiment": "solve", "seed": 1.5}, "seed"),
            ({"experiment": "solve", "replicates": 0}, "replicates"),
            ({"experiment": "solve", "problem": 3}, "problem"),
            ({"experiment": "envelope", "grid": {"lo": 1.0, "hi": 0.0}}, "grid"),
        ],
    )
    def test_invalid(self, data, field):
        """Test that an invalid config names the offending field."""
        with pytest.raises(ConfigError) as exc_info:
            ExperimentConfig.from_dict(data)

        assert exc_info.value.field == field

    def test_missing_problem(self):
        """Test that building a problem needs a problem spec."""
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"experiment": "solve"}).build_problem()

    def test_bregman(self):
        """Test the Bregman generator of a config."""
        config = ExperimentConfig.from_dict({"experiment": "solve", "bregman": [[2.0, 0.0], [0.0, 1.0]]})

        assert config.build_bregman(2).divergence(np.zeros(2), np.array([1.0, 1.0])) == pytest.approx(1.5)
        assert ExperimentConfig.from_dict({"experiment": "solve"}).build_bregman(2).name == "euclidean"

    def test_seed_out_of_range(self):
        """Test that only configured replicates have seeds."""
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({"experiment": "camel", "replicates": 2}).seed_for(2)


class TestSettings:
    """Tests for Settings.from_env."""

    def test_values(self):
        """Test explicit thread count and log level."""
        settings = Settings.from_env({ENV_THREADS: "3", ENV_LOG_LEVEL: "debug"})

        assert settings.threads == 3
        assert settings.log_level == "DEBUG"

    def test_defaults(self):
        """Test the defaults of an empty environment."""
        settings = Settings.from_env({})

        assert settings.threads >= 1
        assert settings.log_level == "WARNING"

    @pytest.mark.parametrize("raw", ["zero", "0", "-2"])
    def test_invalid_threads(self, raw):
        """Test that a bad thread count is refused."""
        with pytest.raises(ConfigError, match=ENV_THREADS):
            Settings.from_env({ENV_THREADS: raw})
