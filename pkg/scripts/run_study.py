#!/usr/bin/env python3
"""
Run every desk-scale study from one experiment config and write the reports.

    python scripts/run_study.py scripts/configs/pendulum_study.yaml --studies warmstart sizes
"""
import argparse
import logging
import os
import sys

from dotenv import load_dotenv

load_dotenv()
sys.path.append(os.getcwd())

from app.core.config import settings  # noqa: E402
from app.core.exceptions import PipelineError  # noqa: E402
from app.services.experiment_service import ExperimentService  # noqa: E402
from app.services.report_service import ReportService  # noqa: E402

logger = logging.getLogger("run_study")


def main() -> int:
    parser = argparse.ArgumentParser(description="Portfolio warmstart studies")
    parser.add_argument("config", help="experiment config YAML")
    parser.add_argument(
        "--studies",
        nargs="+",
        choices=["warmstart", "sizes", "control"],
        default=["warmstart", "sizes", "control"],
    )
    parser.add_argument("--jobs", type=int, default=settings.jobs)
    parser.add_argument("--plot", action="store_true", help="render tuning-curve images")
    args = parser.parse_args()

    logging.basicConfig(level=settings.log_level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        service = ExperimentService(ExperimentService.load_config(args.config), jobs=args.jobs)
        if "warmstart" in args.studies:
            service.run_warmstart_study()
        if "sizes" in args.studies:
            service.run_size_sweep()
        if "control" in args.studies:
            service.run_control_study()
        ReportService().report_directory(service.root, fmt="table", plot=args.plot)
    except PipelineError as e:
        logger.error(e.detail)
        return e.exit_code
    logger.info(f"Studies {', '.join(args.studies)} finished; outputs in {service.root}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
