import argparse
import logging
import sys
from typing import List, Optional

from app.commands import control_eval, gen_data, portfolio, report, study, tune
from app.core.config import settings
from app.core.exceptions import PipelineError

logger = logging.getLogger("app")

COMMANDS = [gen_data, tune, portfolio, control_eval, report, study]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpc-portfolio",
        description="Portfolio-warmstarted Bayesian optimization for data-driven MPC",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=(args.log_level or settings.log_level).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except PipelineError as e:
        logger.error(e.detail)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
