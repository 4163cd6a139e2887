import argparse
import logging
from pathlib import Path

from app.commands import common_options
from app.core.config import settings
from app.services.dynamics_service import BENCHMARKS, DynamicsService

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser(
        "gen-data",
        parents=[common_options()],
        help="generate a random-control trajectory dataset",
    )
    parser.add_argument("--system", default="pendulum", choices=sorted(BENCHMARKS))
    parser.add_argument("--gravity-scale", type=float, default=1.0)
    parser.add_argument("--mass-scale", type=float, default=1.0)
    parser.add_argument("--length-scale", type=float, default=1.0)
    parser.add_argument("--part", default=None, help="scale only this body part (e.g. pole, cart)")
    parser.add_argument("--n-traj", type=int, default=settings.default_n_traj)
    parser.add_argument("--length", type=int, default=settings.default_length)
    parser.add_argument("--dt", type=float, default=settings.default_dt)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--name", default=None, help="dataset id (default: <system>_s<seed>)")
    parser.add_argument("--out", type=Path, default=None, help="dataset file (default: <output_root>/datasets/<name>.csv)")
    parser.set_defaults(handler=run)


def run(args: argparse.Namespace) -> int:
    service = DynamicsService()
    system = service.resolve(args.system, args.gravity_scale, args.mass_scale, args.length_scale, part=args.part, dt=args.dt)
    name = args.name or f"{args.system}_s{args.seed}"
    dataset = service.generate_dataset(
        system, args.n_traj, args.length, args.seed, split=settings.split, name=name, jobs=args.jobs
    )
    out = args.out or settings.output_root / "datasets" / f"{name}.csv"
    service.write_dataset(dataset, out)
    parts = dataset.parts
    print(
        f"{name}: {len(dataset.trajectories)} trajectories x {args.length} steps "
        f"(train {len(parts['train'])}, valid {len(parts['valid'])}, test {len(parts['test'])}) -> {out}"
    )
    return 0
