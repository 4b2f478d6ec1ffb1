"""
Iterate traces: the per-step record every iteration engine produces.
"""

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterator, Optional, TextIO, Union

import numpy as np

from broxopt.exceptions import ConfigError
from broxopt.types import TerminationReason

STEP_COLUMNS = ("t", "step_len", "c", "grad_norm_next", "dist_opt", "client", "residual")


@dataclass
class IterateRow:
    """
    Iterate x_k with the data of the step that leaves it.

    ``t``, ``step_len``, ``c``, ``grad_norm_next``, ``client`` and
    ``residual`` describe the step k -> k+1 and stay empty on the final row.
    ``dist_opt`` is the distance from x_k itself to the known minimizer set.
    """

    k: int
    x: np.ndarray
    f: float
    dist_opt: Optional[float] = None
    t: Optional[float] = None
    step_len: Optional[float] = None
    c: Optional[float] = None
    grad_norm_next: Optional[float] = None
    client: Optional[int] = None
    residual: Optional[float] = None
    # secondary sequence of two-sequence methods (A-BPM keeps x_k here)
    aux: Optional[np.ndarray] = None
    extras: dict[str, float] = field(default_factory=dict)

    @property
    def has_step(self) -> bool:
        return self.t is not None


class IterateTrace:
    """
    Append-only record of a run.

    Usage:
        trace = IterateTrace("bpm", dimension=1)
        trace.start(x0, f0, dist0)
        trace.add_step(x1, f1, t=1.0, step_len=1.0, c=4.0)
        assert trace.num_steps == 1
    """

    def __init__(
        self,
        method: str,
        dimension: int,
        seed: int = 0,
        info: Optional[dict[str, Any]] = None,
    ) -> None:
        self.method = method
        self.dimension = dimension
        self.seed = seed
        self.info: dict[str, Any] = dict(info or {})
        self.terminated_reason: Optional[TerminationReason] = None
        self._rows: list[IterateRow] = []

    def start(self, x: np.ndarray, f: float, dist_opt: Optional[float] = None, **kwargs: Any) -> IterateRow:
        """Record the initial iterate."""
        if self._rows:
            raise ValueError("trace already started")
        row = IterateRow(k=0, x=np.array(x, dtype=np.float64), f=float(f), dist_opt=dist_opt, **kwargs)
        self._rows.append(row)
        return row

    def add_step(
        self,
        x_next: np.ndarray,
        f_next: float,
        *,
        t: float,
        step_len: float,
        c: Optional[float] = None,
        grad_norm_next: Optional[float] = None,
        dist_next: Optional[float] = None,
        client: Optional[int] = None,
        residual: Optional[float] = None,
        aux_next: Optional[np.ndarray] = None,
        extras: Optional[dict[str, float]] = None,
    ) -> IterateRow:
        """Complete the step data of the last row and append x_{k+1}."""
        if not self._rows:
            raise ValueError("trace not started")
        if self.terminated_reason is not None:
            raise ValueError("trace already finished")
        last = self._rows[-1]
        last.t = float(t)
        last.step_len = float(step_len)
        last.c = None if c is None else float(c)
        last.grad_norm_next = None if grad_norm_next is None else float(grad_norm_next)
        last.client = client
        last.residual = None if residual is None else float(residual)
        if extras:
            last.extras.update(extras)
        row = IterateRow(
            k=last.k + 1,
            x=np.array(x_next, dtype=np.float64),
            f=float(f_next),
            dist_opt=dist_next,
            aux=None if aux_next is None else np.array(aux_next, dtype=np.float64),
        )
        self._rows.append(row)
        return row

    def finish(self, reason: TerminationReason) -> None:
        self.terminated_reason = reason

    @property
    def rows(self) -> list[IterateRow]:
        return list(self._rows)

    @property
    def steps(self) -> list[IterateRow]:
        """Rows that carry step data (all but the last)."""
        return [r for r in self._rows if r.has_step]

    @property
    def num_steps(self) -> int:
        return len(self._rows) - 1

    @property
    def final(self) -> IterateRow:
        return self._rows[-1]

    @property
    def iterates(self) -> np.ndarray:
        return np.array([r.x for r in self._rows])

    @property
    def values(self) -> np.ndarray:
        return np.array([r.f for r in self._rows])

    def column(self, name: str) -> list[Optional[float]]:
        """Values of one step column over the step rows."""
        return [getattr(r, name) for r in self.steps]

    def has_column(self, name: str) -> bool:
        """True when every row that should carry ``name`` does."""
        rows = self._rows if name == "dist_opt" else self.steps
        return all(getattr(r, name) is not None for r in rows)

    @property
    def distances(self) -> list[Optional[float]]:
        return [r.dist_opt for r in self._rows]

    @property
    def max_residual(self) -> float:
        residuals = [r.residual for r in self._rows if r.residual is not None]
        return max(residuals, default=0.0)

    def constant_radius(self, rtol: float = 1e-12) -> Optional[float]:
        """The common radius if every step used the same one."""
        radii = [r.t for r in self.steps]
        if not radii:
            return None
        first = radii[0]
        if all(abs(t - first) <= rtol * max(1.0, abs(first)) for t in radii):
            return first
        return None

    def to_csv(self, target: Union[str, Path, TextIO]) -> None:
        """Write the trace as CSV with full-precision floats."""
        if isinstance(target, (str, Path)):
            with open(target, "w", newline="") as stream:
                self._write_csv(stream)
        else:
            self._write_csv(target)

    def to_csv_string(self) -> str:
        buffer = io.StringIO()
        self._write_csv(buffer)
        return buffer.getvalue()

    def header(self) -> list[str]:
        return ["k", *[f"x_{i}" for i in range(self.dimension)], "f", *STEP_COLUMNS]

    def _write_csv(self, stream: TextIO) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(self.header())
        for row in self._rows:
            writer.writerow(
                [
                    row.k,
                    *[repr(float(v)) for v in row.x],
                    repr(row.f),
                    *[_format(getattr(row, name)) for name in STEP_COLUMNS],
                ]
            )

    @classmethod
    def from_csv(
        cls,
        source: Union[str, Path, TextIO],
        method: str = "bpm",
        reason: Optional[TerminationReason] = None,
    ) -> "IterateTrace":
        """Read a trace written by ``to_csv``."""
        if isinstance(source, (str, Path)):
            with open(source, newline="") as stream:
                return cls._read_csv(stream, method, reason)
        return cls._read_csv(source, method, reason)

    @classmethod
    def _read_csv(
        cls, stream: TextIO, method: str, reason: Optional[TerminationReason]
    ) -> "IterateTrace":
        reader = csv.reader(stream)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError("empty trace file", line=1) from None
        coordinates = [h for h in header if h.startswith("x_")]
        expected = ["k", *coordinates, "f", *STEP_COLUMNS]
        if header != expected:
            raise ConfigError("unexpected trace header", field="header", line=1)
        trace = cls(method, dimension=len(coordinates))
        offset = 1 + len(coordinates)
        for line_number, values in enumerate(reader, start=2):
            if len(values) != len(header):
                raise ConfigError("wrong number of columns", line=line_number)
            try:
                row = IterateRow(
                    k=int(values[0]),
                    x=np.array([float(v) for v in values[1:offset]]),
                    f=float(values[offset]),
                )
                parsed = [_parse(v) for v in values[offset + 1 :]]
            except ValueError as exc:
                raise ConfigError(f"unparsable value: {exc}", line=line_number) from exc
            for name, value in zip(STEP_COLUMNS, parsed):
                if name == "client" and value is not None:
                    value = int(value)
                setattr(row, name, value)
            if row.k != len(trace._rows):
                raise ConfigError("rows must be contiguous from k=0", field="k", line=line_number)
            trace._rows.append(row)
        if not trace._rows:
            raise ConfigError("trace has no rows", line=2)
        trace.terminated_reason = reason
        return trace

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "seed": self.seed,
            "terminated_reason": None if self.terminated_reason is None else self.terminated_reason.value,
            "num_steps": self.num_steps,
            "final_x": self.final.x.tolist(),
            "final_f": self.final.f,
            "info": self.info,
        }

    def __len__(self) -> int:
        return len(self._rows)

    def __getitem__(self, k: int) -> IterateRow:
        return self._rows[k]

    def __iter__(self) -> Iterator[IterateRow]:
        return iter(list(self._rows))

    def __repr__(self) -> str:
        reason = None if self.terminated_reason is None else self.terminated_reason.value
        return f"IterateTrace(method={self.method!r}, rows={len(self._rows)}, reason={reason})"


def _format(value: Optional[float]) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return repr(float(value))


def _parse(value: str) -> Optional[float]:
    if value == "":
        return None
    return float(value)
