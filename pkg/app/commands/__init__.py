import argparse

from app.core.config import settings


def common_options() -> argparse.ArgumentParser:
    """Options every subcommand accepts"""
    parser = argparse.ArgumentParser(add_help=False)
    parser.add_argument("--jobs", type=int, default=settings.jobs, help="worker processes for independent units")
    parser.add_argument("--log-level", default=None, help="overrides MPC_PORTFOLIO_LOG_LEVEL")
    parser.add_argument(
        "--canonical",
        action="store_true",
        help="zero wallclock fields so reruns are byte-identical",
    )
    return parser
