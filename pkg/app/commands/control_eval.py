import argparse
import logging
from pathlib import Path

from app.commands import common_options
from app.core.config import settings
from app.core.deps import get_model
from app.models import SimulatorModel
from app.schemas.control import ControlReport, MPCConfig
from app.services.artifact_service import ArtifactService
from app.services.control_service import TASKS, ControlService
from app.services.dynamics_service import DynamicsService

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "control-eval",
        parents=[common_options()],
        help="closed-loop MPC evaluation of a model on the true simulator",
    )
    parser.add_argument("--model", required=True, help="model file, 'zero' (zero controller) or 'perfect' (simulator)")
    parser.add_argument("--task", default="cartpole_swingup", choices=sorted(TASKS))
    parser.add_argument("--system", default=None, help="benchmark system for the task (default: nominal)")
    parser.add_argument("--episodes", type=int, default=1)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--mpc", type=Path, default=None, help="MPC config YAML (default: CEM defaults)")
    parser.add_argument("--tune-budget", type=int, default=0, help="tune the MPC config by BO first")
    parser.add_argument("--method", default=None, help="label for reports, e.g. pure_bo or portfolio_10")
    parser.add_argument("--out", type=Path, default=None, help="directory of control_results.jsonl")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    service = ControlService()
    system = DynamicsService().benchmark(args.system) if args.system else None
    task = service.task(args.task, system=system)
    cfg = service.load_mpc_config(args.mpc) if args.mpc else MPCConfig()

    if args.model == "zero":
        result = service.evaluate_zero_controller(task, args.episodes, args.seed)
    else:
        model = SimulatorModel(task.system) if args.model == "perfect" else get_model(args.model)
        if args.tune_budget > 0:
            cfg, _ = service.tune_controller(model, task, args.tune_budget, episodes=1, seed=args.seed)
            logger.info(f"Tuned MPC config: {cfg.model_dump()}")
        result = service.evaluate_controller(model, task, cfg, args.episodes, args.seed)

    report = ControlReport(
        task=task.name,
        model_id=args.model,
        mpc_config=cfg,
        seed=args.seed,
        episodes=result.episodes,
        episode_costs=result.episode_costs,
        raw_cost=result.raw_cost,
        worst_ref=service.worst_reference(task),
        score=result.score,
        method=args.method,
    )
    out = args.out or settings.output_root / "control"
    out.mkdir(parents=True, exist_ok=True)
    ArtifactService.append_jsonl(report.model_dump(mode="json"), out / "control_results.jsonl")
    print(f"{task.name} [{args.model}]: score {result.score:.4f} (raw cost {result.raw_cost:.6g})")
    return 0
