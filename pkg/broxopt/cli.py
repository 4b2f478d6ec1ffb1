"""
Command-line entry point.

Exit codes: 0 on success (including skipped checks), 1 when a checked
guarantee fails or a run aborts, 2 on configuration errors.
"""

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from broxopt.config import ExperimentConfig, ExperimentKind, Settings, load_problem
from broxopt.exceptions import BroxoptError, ConfigError, MethodError, UnknownTheoremError
from broxopt.experiments import (
    CAMEL_T_VALUES,
    FIG1_T_VALUES,
    envelope_grid,
    experiment_camel,
    experiment_fig1,
    experiment_sweep,
    find_escape_threshold,
    solve,
    write_envelope_grid,
)
from broxopt.factories import ProblemFactory
from broxopt.problems import PiecewiseLinear1D
from broxopt.theory import verify_trace
from broxopt.trace import IterateTrace
from broxopt.types import VerdictKind

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2

_NAMED_PWL = {
    "two_well": ProblemFactory.two_well,
    "not_connected": ProblemFactory.not_connected,
}


def _emit(data: Any, out: Optional[Path], filename: str) -> None:
    text = json.dumps(data, indent=2, sort_keys=True)
    print(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / filename).write_text(text + "\n")


def _config(args: argparse.Namespace, kind: ExperimentKind) -> ExperimentConfig:
    """Run config from --config with command-line overrides applied."""
    if args.config is not None:
        config = ExperimentConfig.load(args.config)
    else:
        config = ExperimentConfig(experiment=kind)
    if getattr(args, "x0", None) is not None:
        config.x0 = list(args.x0)
    if getattr(args, "t", None):
        config.t_values = list(args.t)
        config.schedule_spec = {"kind": "constant", "t": args.t[0]}
    if getattr(args, "seed", None) is not None:
        config.seed = args.seed
    if getattr(args, "replicates", None) is not None:
        if args.replicates < 1:
            raise ConfigError("replicates must be at least 1", field="replicates")
        config.replicates = args.replicates
    if getattr(args, "out", None) is not None:
        config.out = args.out
    return config


def cmd_solve(args: argparse.Namespace) -> int:
    config = _config(args, ExperimentKind.SOLVE)
    outcome = solve(config)
    for report in outcome.reports:
        logger.info(report.summary())
    _emit(outcome.to_dict(), None, "reports.json")
    return EXIT_FAILED if outcome.failed else EXIT_OK


def cmd_envelope(args: argparse.Namespace) -> int:
    config = _config(args, ExperimentKind.ENVELOPE)
    problem = config.build_problem()
    schedule = config.build_schedule(problem)
    if schedule.t_const is None:
        raise ConfigError("envelope needs a constant radius", field="schedule")
    lo, hi, num = config.grid
    base = None if config.x0 is None else np.asarray(config.x0, dtype=np.float64)
    rows = envelope_grid(problem, schedule.t_const, lo, hi, num, base)
    if config.out is not None:
        write_envelope_grid(rows, config.out / "envelope.csv")
    _emit({"t": schedule.t_const, "points": len(rows)}, None, "envelope.json")
    return EXIT_OK


def cmd_verify(args: argparse.Namespace) -> int:
    problem = load_problem(args.problem)
    trace = IterateTrace.from_csv(args.trace, method=args.method)
    reports = [verify_trace(trace, problem, theorem, p=args.p) for theorem in args.theorem]
    for report in reports:
        print(report.summary(), file=sys.stderr)
    _emit([r.to_dict() for r in reports], args.out, "verify.json")
    if any(r.verdict.kind == VerdictKind.FAIL for r in reports):
        return EXIT_FAILED
    return EXIT_OK


def cmd_fig1(args: argparse.Namespace) -> int:
    config = _config(args, ExperimentKind.FIG1)
    if config.problem_spec is not None:
        problem = config.build_problem()
        if not isinstance(problem, PiecewiseLinear1D):
            raise ConfigError("fig1 needs a piecewise-linear problem", field="problem.type")
    else:
        problem = _NAMED_PWL[args.problem]()
    x0 = None if config.x0 is None else config.x0[0]
    summary = experiment_fig1(config.t_values or FIG1_T_VALUES, x0, config.out, problem)
    _emit(summary.to_dict(), None, "fig1.json")
    if not summary.monotone:
        logger.error("reaching the global minimizer is not monotone in t")
        return EXIT_FAILED
    return EXIT_OK


def cmd_camel(args: argparse.Namespace) -> int:
    config = _config(args, ExperimentKind.CAMEL)
    n_starts = config.n_starts if args.n_starts is None else args.n_starts
    threads = Settings.from_env().threads
    summary = asyncio.run(
        experiment_camel(config.t_values or CAMEL_T_VALUES, n_starts, config.seed, config.out, threads=threads)
    )
    _emit(summary.to_dict(), None, "camel.json")
    if not summary.monotone:
        logger.error("camel success counts are not monotone in t")
        return EXIT_FAILED
    return EXIT_OK


def cmd_threshold(args: argparse.Namespace) -> int:
    if args.config is not None:
        problem = ExperimentConfig.load(args.config).build_problem()
    else:
        problem = _NAMED_PWL[args.problem]()
    x0 = args.x0 if args.x0 is not None else [5.0 if problem.name == "two_well" else -4.0]
    result = find_escape_threshold(problem, x0, args.t_lo, args.t_hi)
    _emit(result.to_dict(), args.out, "threshold.json")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    config = _config(args, ExperimentKind.SWEEP)
    rows = asyncio.run(experiment_sweep(config, threads=Settings.from_env().threads))
    _emit([vars(row) for row in rows], None, "sweep.json")
    return EXIT_OK


_COMMON_FLAGS = ("config", "t", "x0", "seed", "replicates", "out")


def _add_common(parser: argparse.ArgumentParser, *flags: str) -> None:
    """Add the shared run flags; a subcommand lists only those it honors."""
    flags = flags or _COMMON_FLAGS
    if "config" in flags:
        parser.add_argument("--config", type=Path, help="Run config JSON.")
    if "t" in flags:
        parser.add_argument("--t", type=float, nargs="+", help="Radius or radii.")
    if "x0" in flags:
        parser.add_argument("--x0", type=float, nargs="+", help="Starting point coordinates.")
    if "seed" in flags:
        parser.add_argument("--seed", type=int, help="Base seed; replicate i uses seed + i.")
    if "replicates" in flags:
        parser.add_argument("--replicates", type=int, help="Number of replicates.")
    if "out" in flags:
        parser.add_argument("--out", type=Path, help="Output directory.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="broxopt", description="Ball-proximal optimization toolkit.")
    parser.add_argument(
        "--log-level",
        default=None,
        help="Logging level (default: $BROXOPT_LOG_LEVEL or WARNING).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="Run one method and chain theorem checks.")
    _add_common(p, "config", "t", "x0", "seed", "out")
    p.set_defaults(handler=cmd_solve)

    p = sub.add_parser("envelope", help="Write the ball envelope on a grid.")
    _add_common(p, "config", "t", "x0", "out")
    p.set_defaults(handler=cmd_envelope)

    p = sub.add_parser("verify", help="Check a recorded trace against named guarantees.")
    p.add_argument("--trace", type=Path, required=True, help="Trace CSV.")
    p.add_argument("--problem", type=Path, required=True, help="Problem spec JSON.")
    p.add_argument("--theorem", nargs="+", required=True, help="Theorem ids.")
    p.add_argument("--method", default="bpm", help="Method that produced the trace.")
    p.add_argument("--p", type=int, default=None, help="Order of p-th order runs.")
    p.add_argument("--out", type=Path, help="Output directory.")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("fig1", help="Escape study on a piecewise-linear function.")
    _add_common(p, "config", "t", "x0", "out")
    p.add_argument("--problem", choices=sorted(_NAMED_PWL), default="two_well")
    p.set_defaults(handler=cmd_fig1)

    p = sub.add_parser("camel", help="Success counts on the six-hump camel function.")
    _add_common(p, "config", "t", "seed", "out")
    p.add_argument(
        "--n-starts", type=int, default=None, dest="n_starts", help="Starts in the disk (default: config or 1000)."
    )
    p.set_defaults(handler=cmd_camel)

    p = sub.add_parser("threshold", help="Bisect the escape threshold radius.")
    _add_common(p, "config", "x0", "out")
    p.add_argument("--problem", choices=sorted(_NAMED_PWL), default="two_well")
    p.add_argument("--t-lo", type=float, default=0.1, dest="t_lo")
    p.add_argument("--t-hi", type=float, default=10.0, dest="t_hi")
    p.set_defaults(handler=cmd_threshold)

    p = sub.add_parser("sweep", help="Run a method over radii and replicate seeds.")
    _add_common(p)
    p.set_defaults(handler=cmd_sweep)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        settings = Settings.from_env()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    level = (args.log_level or settings.log_level).upper()
    if not isinstance(logging.getLevelName(level), int):
        print(f"error: unknown log level {level!r}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except (ConfigError, UnknownTheoremError) as exc:
        logger.error("configuration error: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except MethodError as exc:
        logger.error("run aborted: %s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except BroxoptError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
