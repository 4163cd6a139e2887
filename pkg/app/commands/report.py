import argparse
from pathlib import Path

from app.commands import common_options
from app.core.exceptions import MissingInputError
from app.services.report_service import ReportService


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "report",
        parents=[common_options()],
        help="tables and tuning curves from a results directory",
    )
    parser.add_argument("--dir", type=Path, required=True, help="results directory")
    parser.add_argument("--format", choices=["table", "csv"], default="table")
    parser.add_argument("--plot", action="store_true", help="also render curve images")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    if not args.dir.is_dir():
        raise MissingInputError(f"Results directory not found: {args.dir}")
    written = ReportService().report_directory(args.dir, fmt=args.format, plot=args.plot)
    if not written:
        raise MissingInputError(f"No traces or control results under {args.dir}")
    for path in written:
        print(path)
    return 0
