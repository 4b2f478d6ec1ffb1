"""
Exception hierarchy for broxopt.

Conditions that a caller is expected to inspect (an exhausted oracle budget,
a theorem check whose hypotheses are unmet) are reported as data on the
returned objects instead of being raised.
"""

from typing import TYPE_CHECKING, Optional

if TYPE_CHECKING:
    from broxopt.trace import IterateTrace


class BroxoptError(Exception):
    """Base class for all broxopt errors."""


class ProblemError(BroxoptError, ValueError):
    """Invalid problem construction or a point of the wrong dimension."""


class OracleError(BroxoptError):
    """An oracle was called outside its contract or failed to converge."""


class NonConvexError(OracleError):
    """An oracle that needs convexity was given a nonconvex problem."""


class SetValuedError(OracleError):
    """A quantity that needs a unique broximal point met a set-valued one."""


class MethodError(BroxoptError):
    """An iteration engine could not start or had to stop abnormally."""

    def __init__(self, message: str, partial_trace: Optional["IterateTrace"] = None) -> None:
        super().__init__(message)
        self.partial_trace = partial_trace


class ConfigError(BroxoptError, ValueError):
    """A configuration or problem-spec document could not be parsed."""

    def __init__(
        self,
        message: str,
        field: Optional[str] = None,
        line: Optional[int] = None,
    ) -> None:
        location = []
        if field is not None:
            location.append(f"field {field!r}")
        if line is not None:
            location.append(f"line {line}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.field = field
        self.line = line


class UnknownTheoremError(BroxoptError, KeyError):
    """The requested theorem id is not known to the verifier."""
