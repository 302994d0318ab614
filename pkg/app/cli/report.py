"""
Report command
Consolidated tables for an existing run directory
"""
import argparse
from pathlib import Path

from app.services.experiment_service import ExperimentService


def register(subparsers) -> None:
    """Attach the `report` subcommand"""
    parser = subparsers.add_parser("report", help="Summarize a run directory")
    parser.add_argument("directory", type=Path, help="Run directory written by `run`")
    parser.set_defaults(handler=report_command)


def report_command(args: argparse.Namespace) -> int:
    print(ExperimentService.report(args.directory))
    return 0
