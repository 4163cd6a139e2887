import argparse
import logging
from pathlib import Path

from app.commands import common_options
from app.core.config import settings
from app.core.deps import get_dataset, get_portfolio, get_space
from app.core.exceptions import AllEvaluationsFailedError, ConfigError
from app.services.experiment_service import ExperimentService

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "tune",
        parents=[common_options()],
        help="tune a model configuration on a dataset (pure BO or portfolio warmstart)",
    )
    parser.add_argument("--data", type=Path, required=True, help="dataset file")
    parser.add_argument("--init", default="random", help="'random' or 'portfolio:PATH'")
    parser.add_argument("--budget", type=int, default=settings.tuning_budget)
    parser.add_argument("--k-folds", type=int, default=settings.k_folds)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--timeout-s", type=float, default=settings.eval_timeout_s)
    parser.add_argument("--space", type=Path, default=None, help="configuration space YAML (default: shipped space)")
    parser.add_argument("--out", type=Path, default=None, help="run directory")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    dataset = get_dataset(args.data)
    space = get_space(args.space)

    portfolio = None
    if args.init.startswith("portfolio:"):
        portfolio = get_portfolio(args.init.split(":", 1)[1])
    elif args.init != "random":
        raise ConfigError(f"--init must be 'random' or 'portfolio:PATH', got '{args.init}'")

    service = ExperimentService(jobs=args.jobs)
    service.sysid.k_folds = args.k_folds
    service.sysid.timeout_s = args.timeout_s
    method = "pure_bo" if portfolio is None else f"portfolio_{portfolio.size}"
    out = args.out or settings.output_root / "runs" / dataset.name / method / f"seed_{args.seed}"

    _, record, _ = service.tune_run(
        dataset,
        args.budget,
        args.seed,
        portfolio=portfolio,
        space=space,
        out_dir=out,
        canonical=args.canonical,
    )
    if record.config is None:
        raise AllEvaluationsFailedError(f"Every one of the {args.budget} evaluations failed on {dataset.name}")

    test = record.test_score.rmse if record.test_score and not record.test_score.failed else None
    print(f"{dataset.name} [{method}, seed {args.seed}]: cv rmse {record.cv_score:.6g}, test rmse {test} -> {out}")
    return 0
