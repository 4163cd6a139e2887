import argparse
from pathlib import Path

from app.commands import common_options
from app.services.experiment_service import ExperimentService

STUDIES = ("warmstart", "sizes", "control")


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "study",
        parents=[common_options()],
        help="run a scripted study from an experiment config",
    )
    parser.add_argument("--config", type=Path, required=True, help="experiment config YAML")
    parser.add_argument("--kind", choices=STUDIES, default="warmstart")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    service = ExperimentService(ExperimentService.load_config(args.config), jobs=args.jobs)
    if args.kind == "warmstart":
        for result in service.run_warmstart_study():
            wins = sum(
                1
                for warm, pure in zip(result.portfolio_at_p, result.pure_bo_at_p)
                if warm is not None and (pure is None or warm <= pure)
            )
            print(f"{result.dataset_id} [{result.method}]: warmstart ahead at |P| in {wins}/{len(result.seeds)} seeds")
    elif args.kind == "sizes":
        for size, summaries in sorted(service.run_size_sweep().items()):
            for summary in summaries:
                print(f"size {size:>2} {summary.dataset_id}: {summary.mean:.6g} +- {summary.std:.3g}")
    else:
        for row in service.run_control_study():
            print(f"size {row.size:>2}: control score {row.mean:.4f} (gain {row.gain})")
    print(f"outputs in {service.root}")
    return 0
