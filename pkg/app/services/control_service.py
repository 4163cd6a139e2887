"""
Control Service
Cross-entropy-method shooting MPC over a dynamics model, closed-loop evaluation
on the true simulator and the 0-10 control score
"""
import logging
import math
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

import numpy as np
import yaml
from pydantic import ValidationError

from app.core.exceptions import ConfigError, DimensionMismatchError, MissingInputError
from app.models import DynamicsModel
from app.schemas.configspace import Configuration, ConfigurationSpace
from app.schemas.control import ControlScore, ControlTask, MPCConfig
from app.schemas.dynamics import SystemSpec
from app.schemas.sysid import ModelScore
from app.services.artifact_service import ArtifactService
from app.services.configspace_service import ConfigSpaceService
from app.services.dynamics_service import DynamicsService
from app.services.tuner_service import TunerService

logger = logging.getLogger(__name__)

MPC_SPACE_PATH = Path(__file__).resolve().parent.parent / "data" / "mpc_space.yaml"

# episode cost recorded when the true system diverges
DIVERGED_COST = 1e12

Policy = Callable[[np.ndarray, int], np.ndarray]


def _task_seed(seed: int, *path: int) -> int:
    return int(np.random.SeedSequence([seed, *path]).generate_state(1)[0])


def cartpole_swingup(system: Optional[SystemSpec] = None) -> ControlTask:
    system = system or DynamicsService().benchmark("cartpole")
    return ControlTask(
        name="cartpole_swingup",
        system=system,
        start_state=[0.0, 0.0, math.pi, 0.0],
        goal_state=[0.0, 0.0, 0.0, 0.0],
        q=[1.0, 0.1, 5.0, 0.1],
        r=[0.01],
        episode_length=200,
        success_threshold=250.0,
        angle_dims=[2],
    )


def cartpole_stabilize(system: Optional[SystemSpec] = None) -> ControlTask:
    system = system or DynamicsService().benchmark("cartpole")
    return ControlTask(
        name="cartpole_stabilize",
        system=system,
        start_state=[0.0, 0.0, 0.05, 0.0],
        goal_state=[0.0, 0.0, 0.0, 0.0],
        q=[1.0, 0.1, 5.0, 0.1],
        r=[0.01],
        episode_length=100,
        success_threshold=10.0,
        angle_dims=[2],
    )


def pendulum_swingup(system: Optional[SystemSpec] = None) -> ControlTask:
    system = system or DynamicsService().benchmark("pendulum")
    return ControlTask(
        name="pendulum_swingup",
        system=system,
        start_state=[math.pi, 0.0],
        goal_state=[0.0, 0.0],
        q=[1.0, 0.1],
        r=[0.001],
        episode_length=200,
        success_threshold=100.0,
        angle_dims=[0],
    )


TASKS: Dict[str, Callable[..., ControlTask]] = {
    "cartpole_swingup": cartpole_swingup,
    "cartpole_stabilize": cartpole_stabilize,
    "pendulum_swingup": pendulum_swingup,
}


class ZeroController:
    """Applies zero control at every step; defines the worst reference cost"""

    def __init__(self, control_dim: int):
        self.control_dim = control_dim

    def __call__(self, state: np.ndarray, step_seed: int) -> np.ndarray:
        return np.zeros(self.control_dim)


class ControlService:
    def __init__(self):
        self._worst_ref: Dict[str, float] = {}

    @staticmethod
    def task(name: str, system: Optional[SystemSpec] = None) -> ControlTask:
        if name not in TASKS:
            raise ConfigError(f"Unknown task '{name}'. Known: {', '.join(sorted(TASKS))}")
        return TASKS[name](system)

    # -- costs ---------------------------------------------------------------

    @staticmethod
    def state_error(task: ControlTask, states: np.ndarray) -> np.ndarray:
        error = np.asarray(states, dtype=float) - np.asarray(task.goal_state)
        for d in task.angle_dims:
            error[..., d] = (error[..., d] + math.pi) % (2 * math.pi) - math.pi
        return error

    @staticmethod
    def stage_cost(task: ControlTask, states: np.ndarray, controls: np.ndarray) -> np.ndarray:
        error = ControlService.state_error(task, states)
        return (error ** 2) @ np.asarray(task.q) + (np.asarray(controls) ** 2) @ np.asarray(task.r)

    @staticmethod
    def _predict_finite(model: DynamicsModel, states: np.ndarray, controls: np.ndarray) -> np.ndarray:
        out = np.full_like(states, np.nan)
        finite = np.all(np.isfinite(states), axis=1)
        if finite.any():
            with np.errstate(all="ignore"):
                out[finite] = model.predict(states[finite], controls[finite])
        return out

    @staticmethod
    def rollout_cost(model: DynamicsModel, state: np.ndarray, sequences: np.ndarray, task: ControlTask) -> np.ndarray:
        """Cost of each open-loop sequence (samples, horizon, m); diverged rollouts cost +inf"""
        n_samples, horizon, _ = sequences.shape
        states = np.repeat(np.asarray(state, dtype=float)[None, :], n_samples, axis=0)
        cost = np.zeros(n_samples)
        with np.errstate(all="ignore"):
            for t in range(horizon):
                states = ControlService._predict_finite(model, states, sequences[:, t])
                cost = cost + ControlService.stage_cost(task, states, sequences[:, t])
        return np.where(np.isfinite(cost), cost, np.inf)

    # -- CEM -----------------------------------------------------------------

    @staticmethod
    def _sample_controls(
        rng: np.random.Generator,
        mean: np.ndarray,
        std: np.ndarray,
        n_samples: int,
        low: np.ndarray,
        high: np.ndarray,
    ) -> np.ndarray:
        noise = rng.standard_normal((n_samples,) + mean.shape)
        return np.clip(mean + std * noise, low, high)

    @staticmethod
    def cem_minimize(
        cost_fn: Callable[[np.ndarray], np.ndarray],
        mean: np.ndarray,
        std: np.ndarray,
        low: np.ndarray,
        high: np.ndarray,
        samples: int,
        elite_count: int,
        iterations: int,
        rng: np.random.Generator,
    ) -> np.ndarray:
        """Refit a per-entry Gaussian to the lowest-cost samples; returns the final mean"""
        mean = np.asarray(mean, dtype=float)
        std = np.asarray(std, dtype=float)
        for _ in range(iterations):
            candidates = ControlService._sample_controls(rng, mean, std, samples, low, high)
            costs = np.asarray(cost_fn(candidates), dtype=float)
            costs = np.where(np.isfinite(costs), costs, np.inf)
            elites = candidates[np.argsort(costs, kind="stable")[:elite_count]]
            mean = elites.mean(axis=0)
            std = elites.std(axis=0)
        return np.clip(mean, low, high)

    def mpc_plan(
        self,
        model: DynamicsModel,
        state: np.ndarray,
        task: ControlTask,
        cfg: MPCConfig,
        rng_seed: Union[int, np.random.Generator],
    ) -> np.ndarray:
        """First action of the CEM-optimized open-loop control sequence"""
        system = task.system
        if model.state_dim != system.state_dim or model.control_dim != system.control_dim:
            raise DimensionMismatchError(
                f"model dims ({model.state_dim}, {model.control_dim}) do not match task "
                f"({system.state_dim}, {system.control_dim})"
            )
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
        low, high = system.u_low, system.u_high
        shape = (cfg.horizon, system.control_dim)
        if cfg.control_noise_std is not None:
            noise = np.asarray(cfg.control_noise_std, dtype=float)
        else:
            noise = (high - low) / 4.0
        mean = np.broadcast_to((low + high) / 2.0, shape).copy()
        std = np.broadcast_to(noise, shape).copy()

        def cost_fn(sequences: np.ndarray) -> np.ndarray:
            return self.rollout_cost(model, state, sequences, task)

        plan = self.cem_minimize(cost_fn, mean, std, low, high, cfg.samples, cfg.elite_count, cfg.cem_iterations, rng)
        return plan[0]

    # -- evaluation ----------------------------------------------------------

    @staticmethod
    def run_episode(policy: Policy, task: ControlTask, seed: int) -> float:
        system = task.system
        x = np.asarray(task.start_state, dtype=float)
        total = 0.0
        for t in range(task.episode_length):
            u = np.clip(policy(x, _task_seed(seed, t)), system.u_low, system.u_high)
            x = DynamicsService.step(system, x, u)
            if not np.all(np.isfinite(x)):
                logger.warning(f"{task.name} episode diverged at step {t}")
                return DIVERGED_COST
            total += float(ControlService.stage_cost(task, x[None, :], u[None, :])[0])
        return min(total, DIVERGED_COST)

    def evaluate_policy(self, policy: Policy, task: ControlTask, episodes: int, seed: int) -> List[float]:
        if episodes < 1:
            raise ConfigError(f"episodes must be >= 1, got {episodes}")
        return [self.run_episode(policy, task, _task_seed(seed, e)) for e in range(episodes)]

    def worst_reference(self, task: ControlTask) -> float:
        """Zero-controller episode cost, computed once per task"""
        key = ArtifactService.canonical_json(task.model_dump(mode="json"))
        if key not in self._worst_ref:
            self._worst_ref[key] = self.run_episode(ZeroController(task.system.control_dim), task, 0)
            logger.info(f"Zero-controller cost on {task.name}: {self._worst_ref[key]:.6g}")
        return self._worst_ref[key]

    @staticmethod
    def control_score(raw_cost: float, success_threshold: float, worst_ref: float) -> float:
        """10 * clamp(log(raw / success) / log(worst / success), 0, 1)"""
        if raw_cost <= success_threshold:
            return 0.0
        if worst_ref <= success_threshold:
            return 10.0
        fraction = math.log(raw_cost / success_threshold) / math.log(worst_ref / success_threshold)
        return 10.0 * min(max(fraction, 0.0), 1.0)

    def score_costs(self, episode_costs: List[float], task: ControlTask) -> ControlScore:
        raw_cost = float(np.mean(episode_costs))
        score = self.control_score(raw_cost, task.success_threshold, self.worst_reference(task))
        return ControlScore(score=score, raw_cost=raw_cost, episodes=len(episode_costs), episode_costs=episode_costs)

    def evaluate_controller(
        self,
        model: DynamicsModel,
        task: ControlTask,
        cfg: MPCConfig,
        episodes: int,
        seed: int,
    ) -> ControlScore:
        def policy(state: np.ndarray, step_seed: int) -> np.ndarray:
            return self.mpc_plan(model, state, task, cfg, step_seed)

        costs = self.evaluate_policy(policy, task, episodes, seed)
        result = self.score_costs(costs, task)
        logger.info(f"{task.name}: raw cost {result.raw_cost:.6g}, score {result.score:.4f}")
        return result

    def evaluate_zero_controller(self, task: ControlTask, episodes: int, seed: int) -> ControlScore:
        costs = self.evaluate_policy(ZeroController(task.system.control_dim), task, episodes, seed)
        return self.score_costs(costs, task)

    # -- MPC configuration files and tuning ----------------------------------

    @staticmethod
    def load_mpc_config(path: Union[str, Path]) -> MPCConfig:
        path = Path(path)
        if not path.is_file():
            raise MissingInputError(f"MPC config file not found: {path}")
        try:
            return MPCConfig.model_validate(yaml.safe_load(path.read_text(encoding="utf-8")) or {})
        except (ValidationError, yaml.YAMLError) as e:
            raise ConfigError(f"Invalid MPC config file {path}: {e}") from e

    @staticmethod
    def mpc_space() -> ConfigurationSpace:
        return ConfigSpaceService.load_space(MPC_SPACE_PATH)

    @staticmethod
    def mpc_config_from(config: Configuration) -> MPCConfig:
        return MPCConfig(
            horizon=int(config["horizon"]),
            samples=int(config["samples"]),
            elite_fraction=float(config["elite_fraction"]),
            cem_iterations=int(config["cem_iterations"]),
        )

    def tune_controller(
        self,
        model: DynamicsModel,
        task: ControlTask,
        budget: int,
        episodes: int = 1,
        seed: int = 0,
        tuner: Optional[TunerService] = None,
    ):
        """BO over the MPC configuration space with the model fixed; returns (MPCConfig, trace)"""
        tuner = tuner or TunerService()
        objective = ControlObjective(self, model, task, episodes)
        incumbent, trace = tuner.tune(
            self.mpc_space(), objective, budget, initial=[], seed=seed, dataset_id=task.name, method="control_bo"
        )
        return (self.mpc_config_from(incumbent) if incumbent is not None else MPCConfig()), trace


class ControlObjective:
    """(MPC configuration, seed) -> control score, shaped as a tuner score"""

    def __init__(self, service: ControlService, model: DynamicsModel, task: ControlTask, episodes: int):
        self.service = service
        self.model = model
        self.task = task
        self.episodes = episodes

    def __call__(self, config: Configuration, seed: int) -> ModelScore:
        result = self.service.evaluate_controller(
            self.model, self.task, ControlService.mpc_config_from(config), self.episodes, seed
        )
        return ModelScore(rmse=result.score, n_points=result.episodes)
