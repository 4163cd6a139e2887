import argparse
import logging
from pathlib import Path

from app.commands import common_options
from app.core.config import settings
from app.core.deps import get_datasets
from app.core.exceptions import MissingInputError
from app.schemas.experiment import IncumbentRecord
from app.services.artifact_service import ArtifactService
from app.services.portfolio_service import PortfolioService
from app.services.sysid_service import SysIdService

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "portfolio",
        parents=[common_options()],
        help="build the performance matrix and greedily select a portfolio",
    )
    parser.add_argument("--candidates-dir", type=Path, required=True, help="tune runs holding incumbent.json files")
    parser.add_argument("--meta-dir", type=Path, required=True, help="directory of meta dataset files")
    parser.add_argument("--size", type=int, nargs="+", default=[settings.portfolio_size])
    parser.add_argument("--k-folds", type=int, default=settings.k_folds)
    parser.add_argument("--timeout-s", type=float, default=settings.eval_timeout_s)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=None, help="output directory")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    if not args.candidates_dir.is_dir():
        raise MissingInputError(f"Candidates directory not found: {args.candidates_dir}")
    records = [
        ArtifactService.read_document(IncumbentRecord, path)
        for path in sorted(args.candidates_dir.rglob("incumbent.json"))
    ]
    if not records:
        raise MissingInputError(f"No incumbent.json files under {args.candidates_dir}")
    meta = get_datasets(args.meta_dir)

    service = PortfolioService(sysid=SysIdService(k_folds=args.k_folds, timeout_s=args.timeout_s), jobs=args.jobs)
    candidates = service.collect_candidates((r.dataset_id, r.config) for r in records)
    matrix = service.build_matrix(candidates, meta, args.k_folds, args.seed)
    portfolios = service.build_portfolios(matrix, args.size, candidates)

    out = args.out or settings.output_root / "portfolio"
    service.write_matrix(matrix, out / "matrix.json")
    ArtifactService.write_document(candidates, out / "candidates.json")
    for size, portfolio in portfolios.items():
        name = "portfolio.json" if len(portfolios) == 1 else f"portfolio_p{size}.json"
        service.write_portfolio(portfolio, out / name)
        print(f"portfolio p={size}: {len(portfolio.configs)} of {candidates.size} candidates -> {out / name}")
    return 0
