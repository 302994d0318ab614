"""
Run command
Executes one experiment config and writes its run directory
"""
import argparse
import logging
from pathlib import Path

from app.services.experiment_service import ExperimentService

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    """Attach the `run` subcommand"""
    parser = subparsers.add_parser("run", help="Run the suite selected by an experiment config")
    parser.add_argument("config", type=Path, help="Experiment config (TOML)")
    parser.add_argument("--out", type=Path, default=None, help="Run directory (default: OUTPUT_DIR/<name>-<id>)")
    parser.add_argument("--plots", action="store_true", help="Also write gnuplot scripts under plots/")
    parser.add_argument("--jobs", type=int, default=None, help="Worker threads (overrides DWLAB_JOBS)")
    parser.set_defaults(handler=run_command)


def run_command(args: argparse.Namespace) -> int:
    """
    Run an experiment and print its report

    Returns:
        int: 0 when no item reported a VIOLATION, 1 otherwise
    """
    record, root = ExperimentService.run(args.config, out=args.out, plots=args.plots, jobs=args.jobs)
    print(ExperimentService.report(root))
    print(f"artifacts: {root}")
    if record.failures:
        logger.warning("%d item(s) failed and were recorded as INCONCLUSIVE", record.failures)
    return record.exit_code
