"""
broxopt

Ball-proximal (broximal) optimization:
- Exact and approximate oracles for argmin of f over a ball
- The ball-proximal point method and its linearized, accelerated,
  higher-order, stochastic and Bregman variants
- The ball envelope and gradient descent on it
- Executable checks of the convergence guarantees on recorded runs
"""

from broxopt.types import (
    BallConvexityReport,
    BroxResult,
    EquivalenceReport,
    OracleBudget,
    PropertyReport,
    ScheduleKind,
    SelectionRule,
    StopRule,
    TerminationReason,
    TheoremId,
    TheoremReport,
    Verdict,
    VerdictKind,
)
from broxopt.exceptions import (
    BroxoptError,
    ConfigError,
    MethodError,
    NonConvexError,
    OracleError,
    ProblemError,
    SetValuedError,
    UnknownTheoremError,
)
from broxopt.problems import (
    AffineSet,
    BlackBoxSmooth,
    BregmanGenerator,
    FiniteSumProblem,
    IntervalUnion,
    ObjectiveProblem,
    PiecewiseLinear1D,
    PointSet,
    ProblemMetadata,
    QuadraticProblem,
    bregman_div,
    evaluate,
    grad,
)
from broxopt.factories import ProblemFactory, RandomProblemFactory
from broxopt.oracles import (
    BroxOracle,
    breg_brox,
    brox_blackbox,
    brox_pwl1d,
    brox_quadratic,
    prox,
    prox_p,
)
from broxopt.trace import IterateRow, IterateTrace
from broxopt.schedules import RadiusSchedule
from broxopt.methods import (
    brox_prox_equivalence_check,
    run_abpm,
    run_bpm,
    run_bpm_pth,
    run_bregbpm,
    run_normalized_gd,
    run_ppm,
    run_sbpm,
)
from broxopt.envelope import (
    EnvelopeHandle,
    envelope_convexity_check,
    envelope_grad,
    envelope_gradient_check,
    envelope_minimizer_check,
    envelope_smoothness_check,
    envelope_step_sizes,
    envelope_value,
    run_gd_on_envelope,
)
from broxopt.theory import (
    check_ball_convexity,
    check_brox_properties,
    check_weak_ball_convexity,
    verify_all,
    verify_trace,
)
from broxopt.config import ExperimentConfig, Settings, load_problem, problem_from_spec
from broxopt.experiments import (
    experiment_camel,
    experiment_fig1,
    find_escape_threshold,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    # Types
    "BallConvexityReport",
    "BroxResult",
    "EquivalenceReport",
    "OracleBudget",
    "PropertyReport",
    "ScheduleKind",
    "SelectionRule",
    "StopRule",
    "TerminationReason",
    "TheoremId",
    "TheoremReport",
    "Verdict",
    "VerdictKind",
    # Errors
    "BroxoptError",
    "ConfigError",
    "MethodError",
    "NonConvexError",
    "OracleError",
    "ProblemError",
    "SetValuedError",
    "UnknownTheoremError",
    # Problems
    "AffineSet",
    "BlackBoxSmooth",
    "BregmanGenerator",
    "FiniteSumProblem",
    "IntervalUnion",
    "ObjectiveProblem",
    "PiecewiseLinear1D",
    "PointSet",
    "ProblemMetadata",
    "QuadraticProblem",
    "bregman_div",
    "evaluate",
    "grad",
    # Factories
    "ProblemFactory",
    "RandomProblemFactory",
    # Oracles
    "BroxOracle",
    "breg_brox",
    "brox_blackbox",
    "brox_pwl1d",
    "brox_quadratic",
    "prox",
    "prox_p",
    # Methods
    "IterateRow",
    "IterateTrace",
    "RadiusSchedule",
    "brox_prox_equivalence_check",
    "run_abpm",
    "run_bpm",
    "run_bpm_pth",
    "run_bregbpm",
    "run_normalized_gd",
    "run_ppm",
    "run_sbpm",
    # Envelope
    "EnvelopeHandle",
    "envelope_convexity_check",
    "envelope_grad",
    "envelope_gradient_check",
    "envelope_minimizer_check",
    "envelope_smoothness_check",
    "envelope_step_sizes",
    "envelope_value",
    "run_gd_on_envelope",
    # Theory
    "check_ball_convexity",
    "check_brox_properties",
    "check_weak_ball_convexity",
    "verify_all",
    "verify_trace",
    # Experiments
    "ExperimentConfig",
    "Settings",
    "experiment_camel",
    "experiment_fig1",
    "find_escape_threshold",
    "load_problem",
    "problem_from_spec",
    "solve",
]
