"""
Radius schedules for the iteration engines.
"""

from dataclasses import dataclass
from typing import Any, Optional, Sequence

import numpy as np

from broxopt.exceptions import MethodError
from broxopt.problems import ObjectiveProblem
from broxopt.types import ScheduleKind


@dataclass(frozen=True)
class RadiusSchedule:
    """
    Rule producing the radius t_k of step k.

    ``explicit_list`` repeats its last entry once the list is exhausted.
    ``polyak`` evaluates (f(x_k) - f_star) / ||grad f(x_k)|| at the current
    iterate. ``pth_order`` radii are implied by the p-th order proximal step
    and are produced by the engine itself.
    """

    kind: ScheduleKind
    t_const: Optional[float] = None
    t_list: tuple[float, ...] = ()
    p_order: int = 1
    gamma: Optional[float] = None
    f_star_hint: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind == ScheduleKind.CONSTANT:
            if self.t_const is None or not self.t_const > 0:
                raise MethodError("constant schedule needs t_const > 0")
        elif self.kind == ScheduleKind.EXPLICIT_LIST:
            if not self.t_list or any(not t > 0 for t in self.t_list):
                raise MethodError("explicit_list schedule needs a nonempty list of positive radii")
        elif self.kind == ScheduleKind.POLYAK:
            if self.f_star_hint is None:
                raise MethodError("polyak schedule needs f_star_hint")
        elif self.kind == ScheduleKind.PTH_ORDER:
            if self.p_order < 1 or self.gamma is None or not self.gamma > 0:
                raise MethodError("pth_order schedule needs p >= 1 and gamma > 0")

    @classmethod
    def constant(cls, t: float) -> "RadiusSchedule":
        return cls(ScheduleKind.CONSTANT, t_const=float(t))

    @classmethod
    def explicit(cls, radii: Sequence[float]) -> "RadiusSchedule":
        return cls(ScheduleKind.EXPLICIT_LIST, t_list=tuple(float(t) for t in radii))

    @classmethod
    def polyak(cls, f_star: float) -> "RadiusSchedule":
        return cls(ScheduleKind.POLYAK, f_star_hint=float(f_star))

    @classmethod
    def polyak_for(cls, problem: ObjectiveProblem) -> "RadiusSchedule":
        """Polyak schedule using the problem's known optimal value."""
        if problem.f_star is None:
            raise MethodError(f"problem {problem.name!r} has no known optimal value")
        return cls.polyak(problem.f_star)

    @classmethod
    def pth_order(cls, gamma: float, p: int) -> "RadiusSchedule":
        return cls(ScheduleKind.PTH_ORDER, p_order=int(p), gamma=float(gamma))

    def radius(
        self,
        k: int,
        x: Optional[np.ndarray] = None,
        problem: Optional[ObjectiveProblem] = None,
    ) -> float:
        """Radius of step k taken from iterate x."""
        if self.kind == ScheduleKind.CONSTANT:
            return float(self.t_const)
        if self.kind == ScheduleKind.EXPLICIT_LIST:
            return self.t_list[min(k, len(self.t_list) - 1)]
        if self.kind == ScheduleKind.POLYAK:
            if x is None or problem is None:
                raise MethodError("polyak radius needs the current iterate and problem")
            gap = problem.value(x) - self.f_star_hint
            g_norm = float(np.linalg.norm(problem.gradient(x)))
            if gap <= 0 or g_norm == 0:
                raise MethodError(f"polyak radius undefined at step {k}: gap={gap}, |grad|={g_norm}")
            return gap / g_norm
        raise MethodError("pth_order radii are produced by run_bpm_pth")

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"kind": self.kind.value}
        if self.kind == ScheduleKind.CONSTANT:
            data["t"] = self.t_const
        elif self.kind == ScheduleKind.EXPLICIT_LIST:
            data["t_list"] = list(self.t_list)
        elif self.kind == ScheduleKind.POLYAK:
            data["f_star"] = self.f_star_hint
        else:
            data["gamma"] = self.gamma
            data["p"] = self.p_order
        return data

    def __repr__(self) -> str:
        return f"RadiusSchedule({self.to_dict()})"
