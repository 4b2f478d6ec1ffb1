"""
Tests for the command-line entry point.
"""

import json

import pytest

from broxopt.cli import EXIT_CONFIG, EXIT_FAILED, EXIT_OK, main


@pytest.fixture
def problem_file(tmp_path):
    path = tmp_path / "problem.json"
    path.write_text(json.dumps({"type": "quadratic", "matrix": [[1.0]], "name": "half_square"}))
    return path


@pytest.fixture
def run_config(tmp_path, problem_file):
    """Config of a BPM run on 1/2 x^2 from 5 with two checks."""
    path = tmp_path / "run.json"
    path.write_text(
        json.dumps(
            {
                "experiment": "solve",
                "problem": problem_file.name,
                "method": "bpm",
                "schedule": {"kind": "constant", "t": 1.0},
                "x0": [5.0],
                "verify": ["CONV_LIN_II", "CONV_LIN_IV"],
            }
        )
    )
    return path


def _half(z):
    return 0.5 * z * z


def _output(capsys):
    return json.loads(capsys.readouterr().out)


class TestSolveCommand:
    """Tests for `broxopt solve`."""

    def test_solve(self, run_config, tmp_path, capsys):
        """Test a passing run writes its files and exits 0."""
        out = tmp_path / "out"

        assert main(["solve", "--config", str(run_config), "--out", str(out)]) == EXIT_OK

        data = _output(capsys)
        assert data["trace"]["terminated_reason"] == "optimum_reached"
        assert [r["verdict"]["kind"] for r in data["reports"]] == ["pass", "pass"]
        assert (out / "trace.csv").exists()
        assert (out / "reports.json").exists()

    def test_overrides(self, run_config, capsys):
        """Test that command-line radius and start override the config."""
        assert main(["solve", "--config", str(run_config), "--t", "2.5", "--x0", "5"]) == EXIT_OK

        assert _output(capsys)["trace"]["num_steps"] == 2

    def test_missing_problem(self, capsys):
        """Test that a solve without a problem is a config error."""
        assert main(["solve", "--x0", "1"]) == EXIT_CONFIG
        assert "problem" in capsys.readouterr().err

    def test_bad_config_file(self, tmp_path, capsys):
        """Test that invalid JSON is a config error naming the line."""
        path = tmp_path / "broken.json"
        path.write_text('{\n  "experiment": "solve",\n}\n')

        assert main(["solve", "--config", str(path)]) == EXIT_CONFIG
        assert "line 3" in capsys.readouterr().err

    def test_bad_replicates(self, run_config):
        """Test that a nonpositive replicate count is a config error."""
        assert main(["sweep", "--config", str(run_config), "--replicates", "0"]) == EXIT_CONFIG

    @pytest.mark.parametrize("command", ["solve", "fig1", "camel", "threshold"])
    def test_replicates_only_where_honored(self, command):
        """Test that commands running a single replicate do not accept --replicates."""
        with pytest.raises(SystemExit) as exc_info:
            main([command, "--replicates", "2"])

        assert exc_info.value.code == 2

    def test_bad_log_level(self, run_config):
        """Test that an unknown log level is a config error."""
        assert main(["--log-level", "chatty", "solve", "--config", str(run_config)]) == EXIT_CONFIG

    def test_bad_thread_setting(self, run_config, monkeypatch):
        """Test that a malformed thread count in the environment is a config error."""
        monkeypatch.setenv("BROXOPT_THREADS", "many")

        assert main(["solve", "--config", str(run_config)]) == EXIT_CONFIG

    def test_unknown_command(self):
        """Test that argparse rejects unknown subcommands."""
        with pytest.raises(SystemExit) as exc_info:
            main(["optimize"])

        assert exc_info.value.code == 2


class TestVerifyCommand:
    """Tests for `broxopt verify`."""

    def test_passing_trace(self, tmp_path, problem_file, build_trace, capsys):
        """Test that a correct trace passes."""
        trace_path = tmp_path / "trace.csv"
        build_trace("bpm", [5.0, 4.0, 3.0], _half, 1.0, dist=abs).to_csv(trace_path)

        code = main(
            ["verify", "--trace", str(trace_path), "--problem", str(problem_file), "--theorem", "CONV_LIN_II",
             "--out", str(tmp_path)]
        )

        assert code == EXIT_OK
        assert _output(capsys)[0]["verdict"]["kind"] == "pass"
        assert (tmp_path / "verify.json").exists()

    def test_failing_trace(self, tmp_path, problem_file, build_trace, capsys):
        """Test that a violating trace exits 1 and names the step."""
        trace_path = tmp_path / "trace.csv"
        build_trace("bpm", [5.0, 4.0, 3.5], _half, 1.0, dist=abs).to_csv(trace_path)

        code = main(["verify", "--trace", str(trace_path), "--problem", str(problem_file), "--theorem", "conv_lin_ii"])

        assert code == EXIT_FAILED
        assert _output(capsys)[0]["verdict"]["first_violation"] == 1

    def test_unknown_theorem(self, tmp_path, problem_file, build_trace):
        """Test that an unknown theorem id is a config error."""
        trace_path = tmp_path / "trace.csv"
        build_trace("bpm", [5.0, 4.0], _half, 1.0, dist=abs).to_csv(trace_path)

        code = main(["verify", "--trace", str(trace_path), "--problem", str(problem_file), "--theorem", "NOPE"])

        assert code == EXIT_CONFIG


class TestExperimentCommands:
    """Tests for the experiment subcommands."""

    def test_fig1(self, tmp_path, capsys):
        """Test the two-well study through the CLI."""
        assert main(["fig1", "--t", "1", "3.5", "--out", str(tmp_path)]) == EXIT_OK

        data = _output(capsys)
        assert [row["reached_global"] for row in data["rows"]] == [False, True]
        assert (tmp_path / "fig1_two_well_summary.json").exists()

    def test_threshold(self, tmp_path, capsys):
        """Test the escape threshold through the CLI."""
        assert main(["threshold", "--t-lo", "0.5", "--out", str(tmp_path)]) == EXIT_OK

        assert _output(capsys)["threshold"] == pytest.approx(3.0, abs=1e-5)
        assert (tmp_path / "threshold.json").exists()

    def test_threshold_not_connected(self, capsys):
        """Test that the not-connected example needs no escape."""
        assert main(["threshold", "--problem", "not_connected"]) == EXIT_OK

        assert _output(capsys)["threshold"] == 0.0

    def test_envelope(self, run_config, tmp_path, capsys):
        """Test the envelope grid through the CLI."""
        assert main(["envelope", "--config", str(run_config), "--out", str(tmp_path)]) == EXIT_OK

        assert _output(capsys)["points"] == 101
        assert (tmp_path / "envelope.csv").exists()

    def test_planar_envelope(self, tmp_path, capsys):
        """Test that a planar problem writes the square grid with gradient norms."""
        path = tmp_path / "planar.json"
        path.write_text(
            json.dumps(
                {
                    "experiment": "envelope",
                    "problem": {"type": "quadratic", "matrix": [[1.0, 0.0], [0.0, 1.0]]},
                    "schedule": {"kind": "constant", "t": 1.0},
                    "grid": {"lo": -2.0, "hi": 2.0, "num": 5},
                }
            )
        )

        assert main(["envelope", "--config", str(path), "--out", str(tmp_path)]) == EXIT_OK

        assert _output(capsys)["points"] == 25
        with open(tmp_path / "envelope.csv") as stream:
            lines = stream.read().splitlines()
        assert lines[0] == "x_0,x_1,f,envelope,u_0,u_1,c,grad_norm"
        assert len(lines) == 26

    def test_sweep(self, run_config, capsys, monkeypatch):
        """Test a sweep over two radii and two seeds."""
        monkeypatch.setenv("BROXOPT_THREADS", "2")

        assert main(["sweep", "--config", str(run_config), "--t", "0.5", "1", "--replicates", "2"]) == EXIT_OK

        rows = _output(capsys)
        assert [(r["t"], r["seed"], r["num_steps"]) for r in rows] == [
            (0.5, 0, 10),
            (0.5, 1, 10),
            (1.0, 0, 5),
            (1.0, 1, 5),
        ]

    def test_camel(self, tmp_path, capsys, monkeypatch):
        """Test a two-start camel study through the CLI."""
        monkeypatch.setenv("BROXOPT_THREADS", "2")

        assert main(["camel", "--t", "1", "--n-starts", "2", "--seed", "3", "--out", str(tmp_path)]) == EXIT_OK

        data = _output(capsys)
        assert data["n_starts"] == 2
        assert (tmp_path / "camel_counts.csv").exists()

    def test_fig1_from_config(self, tmp_path, capsys):
        """Test the radius study on a config problem whose success is not monotone in t."""
        # from 0 a radius of 3 lands in the well at 3, while 1 walks left and 30 sees -20
        path = tmp_path / "fig1.json"
        path.write_text(
            json.dumps(
                {
                    "experiment": "fig1",
                    "problem": {
                        "type": "pwl1d",
                        "breakpoints": [-20.0, 1.0, 3.0, 6.0],
                        "slopes": [-1.0, 1.0, -3.0, 2.0, 1.0],
                        "anchor_value": -20.0,
                        "name": "trap",
                    },
                    "x0": [0.0],
                    "t_values": [1.0, 3.0, 30.0],
                }
            )
        )

        assert main(["fig1", "--config", str(path)]) == EXIT_FAILED

        data = _output(capsys)
        assert [row["reached_global"] for row in data["rows"]] == [True, False, True]
        assert data["monotone"] is False

    def test_fig1_rejects_smooth_problem(self, run_config):
        """Test that the radius study needs a piecewise-linear problem."""
        assert main(["fig1", "--config", str(run_config)]) == EXIT_CONFIG

    def test_camel_from_config(self, tmp_path, capsys, monkeypatch):
        """Test that the camel study takes its starts, seed and radii from a config."""
        monkeypatch.setenv("BROXOPT_THREADS", "2")
        path = tmp_path / "camel.json"
        path.write_text(json.dumps({"experiment": "camel", "n_starts": 3, "seed": 4, "t_values": [1.0]}))

        assert main(["camel", "--config", str(path)]) == EXIT_OK

        data = _output(capsys)
        assert data["n_starts"] == 3
        assert data["seed"] == 4
