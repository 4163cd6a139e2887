import math

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.exceptions import ConfigError, DimensionMismatchError, MissingInputError
from app.models import SimulatorModel
from app.schemas.control import ControlTask, MPCConfig
from app.services.configspace_service import ConfigSpaceService
from app.services.control_service import DIVERGED_COST, ControlService, ZeroController


class ShiftModel:
    """x' = x + (u, 0): the control moves the angle directly"""
    state_dim = 2
    control_dim = 1

    def predict(self, x, u):
        return x + np.hstack([u, np.zeros_like(u)])


def short(task, steps: int):
    return task.model_copy(update={"episode_length": steps})


@pytest.fixture
def service():
    return ControlService()


def test_control_score_mapping():
    assert ControlService.control_score(50.0, 100.0, 1000.0) == 0.0
    assert ControlService.control_score(100.0, 100.0, 1000.0) == 0.0
    assert ControlService.control_score(1000.0, 100.0, 1000.0) == pytest.approx(10.0)
    assert ControlService.control_score(5000.0, 100.0, 1000.0) == 10.0
    assert ControlService.control_score(math.sqrt(100.0 * 1000.0), 100.0, 1000.0) == pytest.approx(5.0)
    assert ControlService.control_score(150.0, 100.0, 90.0) == 10.0


def test_state_error_wraps_angles(service):
    task = service.task("pendulum_swingup")
    error = ControlService.state_error(task, np.array([[2 * math.pi - 0.1, 0.5]]))
    np.testing.assert_allclose(error, [[-0.1, 0.5]], atol=1e-12)


def test_stage_cost_is_the_weighted_quadratic(service):
    task = service.task("cartpole_swingup")
    x = np.array([[0.5, -1.0, 0.2, 2.0]])
    u = np.array([[3.0]])
    expected = 1.0 * 0.25 + 0.1 * 1.0 + 5.0 * 0.04 + 0.1 * 4.0 + 0.01 * 9.0
    assert ControlService.stage_cost(task, x, u)[0] == pytest.approx(expected)


def test_zero_controller_scores_ten(service):
    task = short(service.task("pendulum_swingup"), 20)
    result = service.evaluate_zero_controller(task, episodes=2, seed=0)
    assert result.score == 10.0
    assert result.raw_cost == service.worst_reference(task)
    assert result.episodes == 2


def test_starting_at_the_goal_scores_zero(service):
    task = service.task("cartpole_stabilize").model_copy(update={"start_state": [0.0, 0.0, 0.0, 0.0]})
    result = service.evaluate_zero_controller(short(task, 10), episodes=1, seed=0)
    assert result.raw_cost == 0.0 and result.score == 0.0


def test_diverged_episode_gets_the_sentinel_cost(service):
    task = short(service.task("pendulum_swingup"), 5)
    assert ControlService.run_episode(lambda x, s: np.array([np.nan]), task, 0) == DIVERGED_COST


def test_cem_finds_the_minimum_of_a_quadratic():
    def cost(sequences):
        return ((sequences - 0.3) ** 2).sum(axis=(1, 2))

    plan = ControlService.cem_minimize(
        cost,
        mean=np.zeros((3, 1)),
        std=np.ones((3, 1)),
        low=np.array([-1.0]),
        high=np.array([1.0]),
        samples=200,
        elite_count=20,
        iterations=10,
        rng=np.random.default_rng(0),
    )
    np.testing.assert_allclose(plan, 0.3, atol=0.05)


def test_mpc_plan_returns_the_cheapest_planted_sequence(monkeypatch, service):
    planted = np.array([[[-0.5]], [[0.0]], [[0.5]]])

    def fake_sample(rng, mean, std, n_samples, low, high):
        return planted.copy()

    monkeypatch.setattr(ControlService, "_sample_controls", staticmethod(fake_sample))
    task = service.task("pendulum_swingup")
    cfg = MPCConfig(horizon=1, samples=3, elite_fraction=0.3, cem_iterations=1)
    assert cfg.elite_count == 1
    action = service.mpc_plan(ShiftModel(), np.array([0.5, 0.0]), task, cfg, rng_seed=0)
    np.testing.assert_allclose(action, [-0.5])


def test_mpc_plan_checks_model_dimensions(service, cartpole_system):
    task = service.task("pendulum_swingup")
    with pytest.raises(DimensionMismatchError):
        service.mpc_plan(SimulatorModel(cartpole_system), np.zeros(2), task, MPCConfig(), 0)


def test_perfect_model_keeps_the_pole_up(service, cartpole_system):
    task = short(service.task("cartpole_stabilize"), 30)
    cfg = MPCConfig(horizon=8, samples=60, elite_fraction=0.1, cem_iterations=3)
    result = service.evaluate_controller(SimulatorModel(cartpole_system), task, cfg, episodes=1, seed=0)
    assert result.raw_cost < service.worst_reference(task)
    assert result.score < 10.0


@pytest.mark.slow
def test_perfect_model_stabilizes_within_the_success_threshold(service, cartpole_system):
    task = service.task("cartpole_stabilize")
    cfg = MPCConfig(horizon=20, samples=400, elite_fraction=0.05, cem_iterations=6, control_noise_std=[2.0])
    result = service.evaluate_controller(SimulatorModel(cartpole_system), task, cfg, episodes=1, seed=0)
    assert result.raw_cost < task.success_threshold
    assert result.score == 0.0


def test_controller_runs_are_seeded(service, pendulum_system):
    task = short(service.task("pendulum_swingup"), 5)
    cfg = MPCConfig(horizon=4, samples=20, cem_iterations=2)
    model = SimulatorModel(pendulum_system)
    first = service.evaluate_controller(model, task, cfg, episodes=1, seed=3)
    second = service.evaluate_controller(model, task, cfg, episodes=1, seed=3)
    assert first == second


def test_zero_controller_ignores_the_state():
    np.testing.assert_array_equal(ZeroController(2)(np.ones(4), 0), np.zeros(2))


def test_tasks_and_configs(tmp_path, service):
    with pytest.raises(ConfigError):
        service.task("acrobot")
    task = service.task("cartpole_swingup")
    with pytest.raises(ValidationError):
        ControlTask.model_validate({**task.model_dump(), "q": [1.0]})
    with pytest.raises(ValidationError):
        MPCConfig(elite_fraction=0.0)

    path = tmp_path / "mpc.yaml"
    path.write_text("horizon: 12\nsamples: 100\n")
    cfg = ControlService.load_mpc_config(path)
    assert (cfg.horizon, cfg.samples, cfg.elite_count) == (12, 100, 10)
    with pytest.raises(MissingInputError):
        ControlService.load_mpc_config(tmp_path / "absent.yaml")
    path.write_text("horizon: 0\n")
    with pytest.raises(ConfigError):
        ControlService.load_mpc_config(path)


def test_mpc_space_defaults_match_the_controller_defaults():
    space = ControlService.mpc_space()
    assert ControlService.mpc_config_from(ConfigSpaceService.default_configuration(space)) == MPCConfig()


@pytest.mark.slow
def test_tuning_the_controller_returns_a_config(service, cartpole_system):
    from app.services.tuner_service import TunerService

    task = short(service.task("cartpole_stabilize"), 10)
    cfg, trace = service.tune_controller(
        SimulatorModel(cartpole_system), task, budget=3, tuner=TunerService(pool_size=50)
    )
    assert isinstance(cfg, MPCConfig)
    assert len(trace.entries) == 3 and trace.method == "control_bo"
