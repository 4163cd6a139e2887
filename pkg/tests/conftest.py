import math
from typing import List

import numpy as np
import pytest

from app.schemas.configspace import Configuration, ConfigurationSpace
from app.schemas.dynamics import Trajectory
from app.schemas.sysid import ModelScore
from app.services.dynamics_service import DynamicsService

# x' = A x + B u, used where an exactly representable system is needed
LINEAR_A = np.array([[1.0, 0.05], [-0.1, 0.97]])
LINEAR_B = np.array([[0.0], [0.05]])

TOY_SPACE = {
    "name": "toy",
    "specs": [
        {"name": "kind", "kind": "categorical", "choices": ["a", "b"]},
        {"name": "a.x", "kind": "continuous", "lower": 0.0, "upper": 1.0, "condition": {"parent": "kind", "values": ["a"]}},
        {"name": "b.n", "kind": "integer", "lower": 1, "upper": 10, "condition": {"parent": "kind", "values": ["b"]}},
        {"name": "lr", "kind": "continuous", "lower": 1e-4, "upper": 1e-1, "log_scale": True},
    ],
}

SMALL_MODEL_SPACE = {
    "name": "sysid_models",
    "specs": [
        {"name": "model_class", "kind": "categorical", "choices": ["linear", "knn"]},
        {
            "name": "linear.ridge_lambda",
            "kind": "continuous",
            "lower": 1e-8,
            "upper": 1.0,
            "log_scale": True,
            "condition": {"parent": "model_class", "values": ["linear"]},
        },
        {"name": "knn.k", "kind": "integer", "lower": 1, "upper": 5, "condition": {"parent": "model_class", "values": ["knn"]}},
        {
            "name": "knn.weighting",
            "kind": "categorical",
            "choices": ["uniform", "inverse_distance"],
            "condition": {"parent": "model_class", "values": ["knn"]},
        },
    ],
}


def toy_value(config: Configuration) -> float:
    """Minimum 0 at kind=a, a.x=0.3, lr=1e-2"""
    lr_term = 0.1 * (math.log10(config["lr"]) + 2.0) ** 2
    if config["kind"] == "a":
        return (config["a.x"] - 0.3) ** 2 + lr_term
    return 0.5 + (config["b.n"] - 7) ** 2 / 10.0 + lr_term


def toy_objective(config: Configuration, seed: int) -> ModelScore:
    return ModelScore(rmse=toy_value(config), n_points=1)


def linear_trajectories(count: int, length: int, seed: int = 0) -> List[Trajectory]:
    rng = np.random.default_rng(seed)
    trajectories = []
    for _ in range(count):
        x = rng.uniform(-1.0, 1.0, size=2)
        controls = rng.uniform(-1.0, 1.0, size=(length, 1))
        states = [x]
        for u in controls:
            x = LINEAR_A @ x + LINEAR_B @ u
            states.append(x)
        trajectories.append(Trajectory(states=np.array(states), controls=controls, dt=0.05))
    return trajectories


@pytest.fixture
def toy_space() -> ConfigurationSpace:
    return ConfigurationSpace.model_validate(TOY_SPACE)


@pytest.fixture
def small_model_space() -> ConfigurationSpace:
    return ConfigurationSpace.model_validate(SMALL_MODEL_SPACE)


@pytest.fixture
def pendulum_system():
    return DynamicsService().benchmark("pendulum")


@pytest.fixture
def cartpole_system():
    return DynamicsService().benchmark("cartpole")


@pytest.fixture
def pendulum_dataset(pendulum_system):
    return DynamicsService().generate_dataset(pendulum_system, n_traj=12, length=30, seed=0, name="pendulum_small_test")


@pytest.fixture
def linear_config() -> Configuration:
    return Configuration(space_name="sysid_models", values={"model_class": "linear", "linear.ridge_lambda": 1e-8})
