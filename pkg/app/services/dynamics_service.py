"""
Dynamics Service
Ground-truth pendulum / cartpole simulators, benchmark variants and random-control
trajectory datasets
"""
import json
import logging
import math
from functools import partial
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from app.core.config import settings
from app.core.exceptions import ConfigError, MissingInputError, NonFiniteStateError
from app.core.parallel import parallel_map
from app.schemas.dynamics import Dataset, SystemParams, SystemSpec, Trajectory

logger = logging.getLogger(__name__)

# Nominal physical constants; variants multiply these through SystemParams scales
PENDULUM_MASS = 1.0  # kg
PENDULUM_LENGTH = 1.0  # m
CART_MASS = 1.0  # kg
POLE_MASS = 0.1  # kg
POLE_HALF_LENGTH = 0.5  # m

START_PERTURBATION = 0.05


def pendulum(dt: Optional[float] = None, substeps: Optional[int] = None) -> SystemSpec:
    return SystemSpec(
        family="pendulum",
        params=SystemParams(mass_scales={"pole": 1.0}, length_scales={"pole": 1.0}),
        dt=dt or settings.default_dt,
        control_bounds=[(-2.0, 2.0)],
        state_dim=2,
        control_dim=1,
        substeps=substeps or settings.integration_substeps,
    )


def cartpole(dt: Optional[float] = None, substeps: Optional[int] = None) -> SystemSpec:
    return SystemSpec(
        family="cartpole",
        params=SystemParams(
            mass_scales={"cart": 1.0, "pole": 1.0},
            length_scales={"pole": 1.0},
        ),
        dt=dt or settings.default_dt,
        control_bounds=[(-10.0, 10.0)],
        state_dim=4,
        control_dim=1,
        substeps=substeps or settings.integration_substeps,
    )


FAMILIES: Dict[str, Callable[..., SystemSpec]] = {
    "pendulum": pendulum,
    "cartpole": cartpole,
}

# name -> (family, gravity_scale, mass_scale, length_scale, part)
BENCHMARKS: Dict[str, Tuple[str, float, float, float, Optional[str]]] = {
    "pendulum": ("pendulum", 1.0, 1.0, 1.0, None),
    "pendulum_gravity_half": ("pendulum", 0.5, 1.0, 1.0, None),
    "pendulum_gravity_three_quarters": ("pendulum", 0.75, 1.0, 1.0, None),
    "pendulum_gravity_one_and_quarter": ("pendulum", 1.25, 1.0, 1.0, None),
    "pendulum_gravity_one_and_half": ("pendulum", 1.5, 1.0, 1.0, None),
    "pendulum_big": ("pendulum", 1.0, 1.25, 1.25, None),
    "pendulum_small": ("pendulum", 1.0, 0.75, 0.75, None),
    "cartpole": ("cartpole", 1.0, 1.0, 1.0, None),
    "cartpole_gravity_half": ("cartpole", 0.5, 1.0, 1.0, None),
    "cartpole_gravity_three_quarters": ("cartpole", 0.75, 1.0, 1.0, None),
    "cartpole_gravity_one_and_half": ("cartpole", 1.5, 1.0, 1.0, None),
    "cartpole_big_cart": ("cartpole", 1.0, 1.25, 1.25, "cart"),
    "cartpole_small_pole": ("cartpole", 1.0, 0.75, 0.75, "pole"),
    "cartpole_big_pole": ("cartpole", 1.0, 1.25, 1.25, "pole"),
}


class DynamicsService:
    def __init__(self, substeps: Optional[int] = None):
        self.substeps = substeps or settings.integration_substeps

    # -- systems -------------------------------------------------------------

    def benchmark(self, name: str, dt: Optional[float] = None) -> SystemSpec:
        """Named benchmark system, e.g. 'pendulum_gravity_half'"""
        if name not in BENCHMARKS:
            raise ConfigError(f"Unknown system '{name}'. Known: {', '.join(sorted(BENCHMARKS))}")
        family, gravity_scale, mass_scale, length_scale, part = BENCHMARKS[name]
        base = FAMILIES[family](dt=dt, substeps=self.substeps)
        return self.make_variant(base, gravity_scale, mass_scale, length_scale, part=part)

    @staticmethod
    def make_variant(
        base: SystemSpec,
        gravity_scale: float = 1.0,
        mass_scale: float = 1.0,
        length_scale: float = 1.0,
        part: Optional[str] = None,
    ) -> SystemSpec:
        """Copy of `base` with gravity and body-part scales multiplied.

        `part=None` scales every body part; otherwise only the named one.
        """
        for label, scale in (("gravity", gravity_scale), ("mass", mass_scale), ("length", length_scale)):
            if not scale > 0:
                raise ConfigError(f"{label} scale must be > 0, got {scale}")
        params = base.params
        known_parts = set(params.mass_scales) | set(params.length_scales)
        if part is not None and part not in known_parts:
            raise ConfigError(f"Unknown body part '{part}' for {base.family}")

        def scaled(scales: Dict[str, float], factor: float) -> Dict[str, float]:
            return {k: v * factor if part in (None, k) else v for k, v in scales.items()}

        new_params = params.model_copy(
            update={
                "gravity": params.gravity * gravity_scale,
                "mass_scales": scaled(params.mass_scales, mass_scale),
                "length_scales": scaled(params.length_scales, length_scale),
            }
        )
        return base.model_copy(update={"params": new_params})

    def resolve(
        self,
        name: str,
        gravity_scale: float = 1.0,
        mass_scale: float = 1.0,
        length_scale: float = 1.0,
        part: Optional[str] = None,
        dt: Optional[float] = None,
    ) -> SystemSpec:
        """Benchmark `name` with further scales applied on top"""
        base = self.benchmark(name, dt=dt)
        return self.make_variant(base, gravity_scale, mass_scale, length_scale, part=part)

    @staticmethod
    def physics_key(system: SystemSpec) -> tuple:
        """Identity of the simulated physics; equal keys generate the same dynamics"""
        p = system.params

        def rounded(scales: Dict[str, float]) -> tuple:
            return tuple(sorted((k, round(v, 12)) for k, v in scales.items()))

        return (
            system.family,
            round(p.gravity, 12),
            rounded(p.mass_scales),
            rounded(p.length_scales),
            round(p.damping, 12),
            round(system.dt, 12),
        )

    # -- simulation ----------------------------------------------------------

    @staticmethod
    def derivatives(system: SystemSpec, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Continuous-time accelerations of the generalized coordinates.

        Pendulum returns theta_ddot with shape (..., 1); cartpole returns
        (x_ddot, theta_ddot) with shape (..., 2). Angles are measured from upright.
        """
        p = system.params
        g = p.gravity
        if system.family == "pendulum":
            theta, theta_dot = x[..., 0], x[..., 1]
            m = PENDULUM_MASS * p.mass_scales["pole"]
            l = PENDULUM_LENGTH * p.length_scales["pole"]
            theta_acc = (g / l) * np.sin(theta) + (u[..., 0] - p.damping * theta_dot) / (m * l * l)
            return theta_acc[..., None]

        theta, theta_dot = x[..., 2], x[..., 3]
        m_cart = CART_MASS * p.mass_scales["cart"]
        m_pole = POLE_MASS * p.mass_scales["pole"]
        l = POLE_HALF_LENGTH * p.length_scales["pole"]
        total = m_cart + m_pole
        sin, cos = np.sin(theta), np.cos(theta)
        temp = (u[..., 0] + m_pole * l * theta_dot ** 2 * sin) / total
        theta_acc = (g * sin - cos * temp) / (l * (4.0 / 3.0 - m_pole * cos ** 2 / total))
        theta_acc = theta_acc - p.damping * theta_dot / (m_pole * l * l)
        x_acc = temp - m_pole * l * theta_acc * cos / total
        return np.stack([x_acc, theta_acc], axis=-1)

    @staticmethod
    def step(system: SystemSpec, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """x_{t+1} = f(x_t, u_t): semi-implicit Euler over dt in `system.substeps` substeps.

        Accepts single vectors or batches (..., n) / (..., m); u is clamped to the
        control bounds first.
        """
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        if x.shape[-1] != system.state_dim or u.shape[-1] != system.control_dim:
            raise ConfigError(
                f"expected state dim {system.state_dim} and control dim {system.control_dim}, "
                f"got {x.shape[-1]} and {u.shape[-1]}"
            )
        if not np.all(np.isfinite(x)):
            raise NonFiniteStateError("non-finite input state")
        u = np.clip(u, system.u_low, system.u_high)

        # pendulum [theta, theta_dot], cartpole [x, x_dot, theta, theta_dot]
        if system.family == "pendulum":
            pos_idx, vel_idx = [0], [1]
        else:
            pos_idx, vel_idx = [0, 2], [1, 3]

        h = system.dt / system.substeps
        state = x.copy()
        for _ in range(system.substeps):
            acc = DynamicsService.derivatives(system, state, u)
            state[..., vel_idx] = state[..., vel_idx] + h * acc
            state[..., pos_idx] = state[..., pos_idx] + h * state[..., vel_idx]
        return state

    @staticmethod
    def energy(system: SystemSpec, x: np.ndarray) -> np.ndarray:
        """Pendulum mechanical energy, zero at the hanging rest state"""
        if system.family != "pendulum":
            raise ConfigError("energy is defined for the pendulum family only")
        p = system.params
        m = PENDULUM_MASS * p.mass_scales["pole"]
        l = PENDULUM_LENGTH * p.length_scales["pole"]
        theta, theta_dot = x[..., 0], x[..., 1]
        return 0.5 * m * l * l * theta_dot ** 2 + m * p.gravity * l * (1.0 + np.cos(theta))

    @staticmethod
    def stable_state(system: SystemSpec) -> np.ndarray:
        if system.family == "pendulum":
            return np.array([math.pi, 0.0])
        return np.array([0.0, 0.0, math.pi, 0.0])

    @staticmethod
    def sample_start(system: SystemSpec, rng: np.random.Generator) -> np.ndarray:
        """Uniform perturbation around the stable fixed point"""
        d = START_PERTURBATION
        x0 = DynamicsService.stable_state(system)
        if system.family == "pendulum":
            return x0 + rng.uniform(-d, d, size=2)
        noise = rng.uniform(-d, d, size=3)
        return x0 + np.array([noise[0], 0.0, noise[1], noise[2]])

    @staticmethod
    def rollout(system: SystemSpec, x0: np.ndarray, controls: np.ndarray) -> np.ndarray:
        states = np.empty((controls.shape[0] + 1, system.state_dim))
        states[0] = x0
        for j, u in enumerate(controls):
            states[j + 1] = DynamicsService.step(system, states[j], u)
        return states

    # -- datasets ------------------------------------------------------------

    @staticmethod
    def _generate_trajectory(system: SystemSpec, length: int, seed: int, index: int) -> Trajectory:
        # per-trajectory stream: serial and parallel generation agree bit-exactly
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index,)))
        x0 = DynamicsService.sample_start(system, rng)
        controls = rng.uniform(system.u_low, system.u_high, size=(length, system.control_dim))
        states = DynamicsService.rollout(system, x0, controls)
        return Trajectory(states=states, controls=controls, dt=system.dt)

    def generate_dataset(
        self,
        system: SystemSpec,
        n_traj: int,
        length: int,
        seed: int,
        split: Sequence[float] = (0.7, 0.15, 0.15),
        name: Optional[str] = None,
        jobs: int = 1,
    ) -> Dataset:
        if n_traj < 1 or length < 1:
            raise ConfigError(f"need N >= 1 and L >= 1, got N={n_traj}, L={length}")
        split = tuple(float(f) for f in split)
        if len(split) != 3 or any(not f > 0 for f in split) or abs(sum(split) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must be three positive numbers summing to 1, got {split}")

        worker = partial(self._generate_trajectory, system, length, seed)
        trajectories = parallel_map(worker, range(n_traj), jobs=jobs)
        logger.info(f"Generated {n_traj} {system.family} trajectories of {length} steps (seed {seed})")
        return Dataset(
            name=name or f"{system.family}_s{seed}",
            trajectories=trajectories,
            system=system,
            seed=seed,
            split=split,
        )

    @staticmethod
    def split_trajectories(dataset: Dataset) -> Dict[str, List[Trajectory]]:
        return {"train": dataset.train, "valid": dataset.valid, "test": dataset.test}

    # -- dataset files -------------------------------------------------------

    @staticmethod
    def write_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
        """Header record, then one row per (trajectory, step); %.17g round-trips exactly"""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        system = dataset.system
        n, m = system.state_dim, system.control_dim
        header = {
            "name": dataset.name,
            "system": system.model_dump(mode="json"),
            "dt": system.dt,
            "n": n,
            "m": m,
            "seed": dataset.seed,
            "split": list(dataset.split),
            "n_traj": len(dataset.trajectories),
        }

        frames = []
        for i, traj in enumerate(dataset.trajectories):
            controls = np.vstack([traj.controls, np.full((1, m), np.nan)])
            block = pd.DataFrame(np.hstack([traj.states, controls]), columns=[f"x{k}" for k in range(n)] + [f"u{k}" for k in range(m)])
            block.insert(0, "step", np.arange(traj.states.shape[0]))
            block.insert(0, "traj", i)
            frames.append(block)
        table = pd.concat(frames, ignore_index=True)

        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write("# " + json.dumps(header, sort_keys=True) + "\n")
            table.to_csv(f, index=False, float_format="%.17g", lineterminator="\n")
        return path

    @staticmethod
    def read_dataset(path: Union[str, Path]) -> Dataset:
        path = Path(path)
        if not path.is_file():
            raise MissingInputError(f"Dataset file not found: {path}")
        with open(path, encoding="utf-8") as f:
            first = f.readline()
        if not first.startswith("# "):
            raise ConfigError(f"{path} has no dataset header record")
        try:
            header = json.loads(first[2:])
            system = SystemSpec.model_validate(header["system"])
            n, m = header["n"], header["m"]

            table = pd.read_csv(path, skiprows=1, float_precision="round_trip")
            x_cols = [f"x{k}" for k in range(n)]
            u_cols = [f"u{k}" for k in range(m)]
            trajectories: List[Trajectory] = []
            for _, block in table.groupby("traj", sort=True):
                block = block.sort_values("step")
                states = block[x_cols].to_numpy(dtype=float)
                controls = block[u_cols].to_numpy(dtype=float)[:-1]
                trajectories.append(Trajectory(states=states, controls=controls, dt=system.dt))
            return Dataset(
                name=header["name"],
                trajectories=trajectories,
                system=system,
                seed=header["seed"],
                split=tuple(header["split"]),
            )
        except (ValueError, KeyError, TypeError) as e:
            raise ConfigError(f"Malformed dataset file {path}: {type(e).__name__}: {e}") from e
