import argparse
import sys
from pathlib import Path

import logfire

from gfkit.errors import BlowUp, DomainError, InvalidCoefficient, NoConvergence, ScenarioError, TailOverflow
from gfkit.models.scenario import Scenario
from gfkit.pipelines.run import run_scenario
from gfkit.pipelines.sweep import run_sweep
from gfkit.settings import settings

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3

# Numerical failures first: DomainError is also a ValueError.
NUMERICAL_ERRORS = (NoConvergence, BlowUp, TailOverflow, DomainError)
INVALID_ERRORS = (InvalidCoefficient, ScenarioError, ValueError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gfkit", description="Growth-fragmentation scenarios: Perron triple, evolution, diagnostics.")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run one scenario and write its artifacts.")
    run.add_argument("scenario", type=Path, help="Scenario file (INI sections).")
    run.add_argument("--out", type=Path, required=True, help="Output directory.")
    run.add_argument("--no-oracle", action="store_true", help="Skip the particle oracle even if the scenario enables it.")
    run.add_argument("--quiet", action="store_true", help="No console logging.")

    sweep = commands.add_parser("sweep", help="Run a scenario over a Cartesian product of parameter values.")
    sweep.add_argument("scenario", type=Path, help="Template scenario file.")
    sweep.add_argument("--param", action="append", default=[], metavar="SECTION.KEY=V1,V2", help="Swept values; repeatable.")
    sweep.add_argument("--out", type=Path, required=True, help="Output directory.")
    sweep.add_argument("--jobs", type=int, default=settings.SWEEP_JOBS, help="Concurrent scenarios.")
    sweep.add_argument("--quiet", action="store_true", help="No console logging.")

    return parser


def _execute(args: argparse.Namespace) -> None:
    if args.command == "run":
        scenario = Scenario.from_file(args.scenario)
        run_scenario(scenario, args.out, oracle=not args.no_oracle)
    else:
        if args.jobs < 1:
            raise ScenarioError("--jobs must be at least 1.")
        run_sweep(args.scenario, args.param, args.out, args.jobs)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logfire.configure(
        send_to_logfire="if-token-present",
        token=settings.LOGFIRE_TOKEN,
        console=False if args.quiet or not settings.LOGFIRE_CONSOLE else None,
    )

    try:
        _execute(args)
    except NUMERICAL_ERRORS as e:
        logfire.exception(f"{args.command} failed")
        print(f"gfkit: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    except INVALID_ERRORS as e:
        logfire.exception(f"{args.command} failed")
        print(f"gfkit: invalid input: {e}", file=sys.stderr)
        return EXIT_INVALID

    return EXIT_OK
