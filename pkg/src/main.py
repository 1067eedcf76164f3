"""
Command-line entry point.

    python -m src.main [--out-dir DIR] [--workers K] [--tol TOL] [--log-level LEVEL] <command> ...

    simulate <preset>                       fig2 | fig3 | fig4 | fig5 | figA
    run --config <path>
    sweep --config <path> --axis <param>=<v1,v2,...>
    dark-verify --n-max <k>
    rerun --manifest <path>

Exit codes: 0 success, 2 usage/validation, 3 numeric failure, 4 I/O.
"""

from typing import List, Optional
import argparse
import asyncio
import logging
import sys

from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from src.broadcasting.event_broadcaster import event_broadcaster, log_events
from src.custom_code.experiments import (
    DARK_RESIDUAL_TOL,
    PRESETS,
    ExperimentRunner,
    dark_verify,
    dark_verify_passed,
    preset_configs,
    with_tolerance,
)
from src.utils.errors import NumericError, SimulationError
from src.utils.results import Manifest, ResultTable
from src.utils.schemas import SweepAxis, load_config
from src.utils.settings import get_settings

logger = logging.getLogger(__name__)

console = Console()


# ----------------------------------------------------------------------------
# Argument parsing
# ----------------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(
        prog="becsim",
        description="Dissipative dark-state entanglement of a double-well condensate in a lossy resonator",
    )
    parser.add_argument("--out-dir", default=settings.out_dir, help="directory for CSV files and manifest")
    parser.add_argument("--workers", type=int, default=settings.workers, help="parallel worker processes")
    parser.add_argument("--tol", type=float, default=None, help="integrator rel_tol (abs_tol = tol/100)")
    parser.add_argument("--log-level", default=settings.log_level, help="DEBUG, INFO, WARNING or ERROR")
    parser.add_argument("--debug", action="store_true", help="print every written file")

    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="run a named preset")
    simulate.add_argument("preset", help=f"one of {', '.join(PRESETS)}")

    run = sub.add_parser("run", help="run an experiment described by a config file")
    run.add_argument("--config", required=True)

    sweep = sub.add_parser("sweep", help="sweep one parameter of a config")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--axis", required=True, help="param=v1,v2,...")

    verify = sub.add_parser("dark-verify", help="check the dark-state family")
    verify.add_argument("--n-max", type=int, default=5)

    rerun = sub.add_parser("rerun", help="re-execute a run from its manifest")
    rerun.add_argument("--manifest", required=True)
    return parser


# ----------------------------------------------------------------------------
# Output
# ----------------------------------------------------------------------------
def print_manifest(manifest: Manifest):
    table = Table(title="Written files")
    table.add_column("Run", style="cyan")
    table.add_column("File")
    table.add_column("Warnings", style="yellow")
    for run in manifest.runs:
        stem = run.config["output"]["stem"]
        warnings = "; ".join(run.diagnostics.get("warnings", [])) or "-"
        for path in run.files:
            table.add_row(stem, path, warnings)
    console.print(table)


def print_frame(title: str, result: ResultTable):
    table = Table(title=title)
    for header in result.headers:
        table.add_column(header)
    for row in result.rows:
        table.add_row(*(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row))
    console.print(table)


# ----------------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------------
async def dispatch(args: argparse.Namespace) -> int:
    runner = ExperimentRunner(out_dir=args.out_dir, workers=args.workers, debug=args.debug)

    if args.command == "simulate":
        configs = [with_tolerance(c, args.tol) for c in preset_configs(args.preset)]
        _, manifest = await runner.run(configs, job_id=args.preset)
        print_manifest(manifest)

    elif args.command == "run":
        _, manifest = await runner.run_config(args.config, args.tol)
        print_manifest(manifest)

    elif args.command == "sweep":
        config = with_tolerance(load_config(args.config), args.tol)
        table, _ = await runner.sweep(config, SweepAxis.parse(args.axis))
        print_frame(f"Sweep over {table.metadata['axis']}", table)

    elif args.command == "dark-verify":
        frame = dark_verify(args.n_max)
        print_frame("Dark states", ResultTable(name="dark_verify", frame=frame))
        if not dark_verify_passed(frame):
            raise NumericError(f"dark-state residual above {DARK_RESIDUAL_TOL}")
        console.print(f"✅ all dark states stationary (residuals < {DARK_RESIDUAL_TOL})")

    elif args.command == "rerun":
        first, manifest = await runner.rerun(args.manifest)
        if manifest.kind == "runs":
            print_manifest(manifest)
        else:
            print_frame("Sweep rerun", first)
    return 0


async def _run_with_events(args: argparse.Namespace) -> int:
    queue: asyncio.Queue = asyncio.Queue()
    event_broadcaster.add_listener(queue)
    listener = asyncio.create_task(log_events(queue))
    try:
        return await dispatch(args)
    finally:
        await queue.join()
        listener.cancel()
        event_broadcaster.remove_listener(queue)


def setup_logging(level: str):
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), rich_tracebacks=True)],
        force=True,
    )


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        setup_logging(args.log_level)
    except ValueError:
        parser.print_usage(sys.stderr)
        print(f"❌ unknown log level '{args.log_level}'", file=sys.stderr)
        return 2

    try:
        return asyncio.run(_run_with_events(args))
    except SimulationError as e:
        logger.error(f"❌ {type(e).__name__}: {e}")
        return e.exit_code
    except KeyboardInterrupt:
        logger.warning("interrupted")
        return 130
    except Exception as e:
        logger.error(f"unexpected error: {e}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
