"""
Tests for IterateTrace.
"""

import io

import numpy as np
import pytest

from broxopt.exceptions import ConfigError
from broxopt.trace import STEP_COLUMNS, IterateTrace
from broxopt.types import TerminationReason


@pytest.fixture
def trace() -> IterateTrace:
    """A two-step 1-D trace of BPM on 1/2 x^2 from 3."""
    trace = IterateTrace("bpm", dimension=1, info={"problem": "half_square"})
    trace.start(np.array([3.0]), 4.5, 3.0)
    trace.add_step(np.array([2.0]), 2.0, t=1.0, step_len=1.0, c=2.0, grad_norm_next=2.0, dist_next=2.0, residual=0.0)
    trace.add_step(np.array([1.0]), 0.5, t=1.0, step_len=1.0, c=1.0, grad_norm_next=1.0, dist_next=1.0, residual=1e-13)
    trace.finish(TerminationReason.MAX_ITER)
    return trace


class TestIterateTrace:
    """Tests for recording iterates."""

    def test_rows_and_steps(self, trace):
        """Test that the last row carries no step data."""
        assert len(trace) == 3
        assert trace.num_steps == 2
        assert [r.k for r in trace.steps] == [0, 1]
        assert trace.final.t is None
        assert trace.final.x.tolist() == [1.0]
        assert trace.column("c") == [2.0, 1.0]
        assert trace.distances == [3.0, 2.0, 1.0]

    def test_column_presence(self, trace):
        """Test has_column over the rows that should carry each column."""
        assert trace.has_column("dist_opt")
        assert trace.has_column("grad_norm_next")
        assert not trace.has_column("client")

    def test_constant_radius_and_residual(self, trace):
        """Test the common radius and the largest residual."""
        assert trace.constant_radius() == 1.0
        assert trace.max_residual == pytest.approx(1e-13)

    def test_varying_radius(self):
        """Test that a changing radius has no common value."""
        trace = IterateTrace("bpm", dimension=1)
        trace.start(np.array([0.0]), 0.0)
        trace.add_step(np.array([1.0]), 0.0, t=1.0, step_len=1.0)
        trace.add_step(np.array([3.0]), 0.0, t=2.0, step_len=2.0)

        assert trace.constant_radius() is None

    def test_start_twice_rejected(self, trace):
        """Test that a trace can only be started once."""
        with pytest.raises(ValueError):
            trace.start(np.array([0.0]), 0.0)

    def test_add_after_finish_rejected(self, trace):
        """Test that a finished trace is closed."""
        with pytest.raises(ValueError):
            trace.add_step(np.array([0.0]), 0.0, t=1.0, step_len=1.0)

    def test_to_dict(self, trace):
        """Test the JSON summary of a trace."""
        data = trace.to_dict()

        assert data["method"] == "bpm"
        assert data["terminated_reason"] == "max_iter"
        assert data["num_steps"] == 2
        assert data["final_x"] == [1.0]
        assert data["info"] == {"problem": "half_square"}


class TestTraceCsv:
    """Tests for the CSV form of a trace."""

    def test_header(self, trace):
        """Test the column layout."""
        assert trace.header() == ["k", "x_0", "f", *STEP_COLUMNS]

    def test_read_back(self, trace, tmp_path):
        """Test that a written trace reads back with full precision."""
        path = tmp_path / "trace.csv"
        trace.to_csv(path)

        loaded = IterateTrace.from_csv(path, reason=TerminationReason.MAX_ITER)

        assert loaded.num_steps == 2
        assert loaded.iterates.tolist() == trace.iterates.tolist()
        assert loaded.column("residual") == [0.0, 1e-13]
        assert loaded.final.c is None
        assert loaded.terminated_reason == TerminationReason.MAX_ITER

    def test_client_column_is_integer(self):
        """Test that client indices come back as ints."""
        trace = IterateTrace("sbpm", dimension=2)
        trace.start(np.array([3.0, 4.0]), 12.5)
        trace.add_step(np.array([0.0, 4.0]), 8.0, t=5.0, step_len=3.0, c=0.0, client=0)

        loaded = IterateTrace.from_csv(io.StringIO(trace.to_csv_string()), method="sbpm")

        assert loaded[0].client == 0
        assert isinstance(loaded[0].client, int)

    def test_empty_file(self):
        """Test that an empty file is a config error at line 1."""
        with pytest.raises(ConfigError) as exc_info:
            IterateTrace.from_csv(io.StringIO(""))

        assert exc_info.value.line == 1

    def test_bad_header(self):
        """Test that a foreign header is refused."""
        with pytest.raises(ConfigError) as exc_info:
            IterateTrace.from_csv(io.StringIO("a,b,c\n1,2,3\n"))

        assert exc_info.value.field == "header"

    def test_bad_value_reports_line(self, trace):
        """Test that an unparsable cell names its line."""
        lines = trace.to_csv_string().splitlines()
        lines[2] = lines[2].replace("2.0", "two", 1)

        with pytest.raises(ConfigError, match="line 3") as exc_info:
            IterateTrace.from_csv(io.StringIO("\n".join(lines) + "\n"))

        assert exc_info.value.line == 3

    def test_missing_column_reports_line(self, trace):
        """Test that a short row names its line."""
        lines = trace.to_csv_string().splitlines()
        lines[3] = lines[3].rsplit(",", 1)[0]

        with pytest.raises(ConfigError) as exc_info:
            IterateTrace.from_csv(io.StringIO("\n".join(lines) + "\n"))

        assert exc_info.value.line == 4

    def test_gap_in_rows(self, trace):
        """Test that rows must be numbered from 0 without gaps."""
        lines = trace.to_csv_string().splitlines()
        del lines[2]

        with pytest.raises(ConfigError) as exc_info:
            IterateTrace.from_csv(io.StringIO("\n".join(lines) + "\n"))

        assert exc_info.value.field == "k"
