import math
import signal
import time

import numpy as np
import pytest

from app.core.exceptions import ConfigError, MissingInputError
from app.models import KNNModel, LinearModel, build_model
from app.models.mlp import init_params, loss_and_grads
from app.schemas.configspace import Configuration
from app.schemas.sysid import ModelScore
from app.services.dynamics_service import DynamicsService
from app.services.sysid_service import SysIdService, time_limit

from tests.conftest import LINEAR_A, LINEAR_B, linear_trajectories


def knn_config(k: int, weighting: str = "uniform") -> Configuration:
    return Configuration(space_name="sysid_models", values={"model_class": "knn", "knn.k": k, "knn.weighting": weighting})


MLP_CONFIG = Configuration(
    space_name="sysid_models",
    values={"model_class": "mlp", "mlp.hidden_units": 16, "mlp.layers": 2, "mlp.learning_rate": 1e-2, "mlp.epochs": 30},
)
POLY_CONFIG = Configuration(
    space_name="sysid_models",
    values={"model_class": "poly_ridge", "poly_ridge.degree": 2, "poly_ridge.ridge_lambda": 1e-3},
)


def test_linear_model_recovers_transition_matrices(linear_config):
    trajectories = linear_trajectories(6, 40)
    model = SysIdService.train(linear_config, trajectories)
    assert isinstance(model, LinearModel)
    a, b = model.transition_matrices()
    np.testing.assert_allclose(a, LINEAR_A, atol=1e-6)
    np.testing.assert_allclose(b, LINEAR_B, atol=1e-6)
    assert SysIdService.score(model, linear_trajectories(2, 20, seed=5)).rmse < 1e-5


def test_perfect_linear_system_has_zero_cv_error(linear_config):
    score = SysIdService(k_folds=3).cv_score(linear_config, linear_trajectories(6, 40), seed=0)
    assert not score.failed
    assert score.rmse <= 1e-8


def linear_with(ridge_lambda: float) -> Configuration:
    return Configuration(space_name="sysid_models", values={"model_class": "linear", "linear.ridge_lambda": ridge_lambda})


def test_training_error_grows_with_ridge_strength(pendulum_dataset):
    errors = [
        SysIdService.score(SysIdService.train(linear_with(lam), pendulum_dataset.train), pendulum_dataset.train).rmse
        for lam in np.logspace(-8, 2, 11)
    ]
    assert all(b >= a * (1 - 1e-9) for a, b in zip(errors, errors[1:]))
    assert errors[-1] > errors[0]


def test_scores_ignore_trajectory_order(pendulum_dataset, linear_config):
    model = SysIdService.train(linear_config, pendulum_dataset.train)
    order = np.random.default_rng(3).permutation(len(pendulum_dataset.test))
    shuffled = [pendulum_dataset.test[i] for i in order]
    forward = SysIdService.score(model, pendulum_dataset.test)
    assert SysIdService.score(model, shuffled).rmse == pytest.approx(forward.rmse, rel=1e-12)
    assert SysIdService.score(model, shuffled[::-1]).n_points == forward.n_points

    refit = SysIdService.train(linear_config, pendulum_dataset.train[::-1])
    assert SysIdService.score(refit, pendulum_dataset.test).rmse == pytest.approx(forward.rmse, rel=1e-8)


def test_nearest_neighbour_memorizes_training_pairs(pendulum_dataset):
    model = SysIdService.train(knn_config(1), pendulum_dataset.train)
    assert isinstance(model, KNNModel)
    assert SysIdService.score(model, pendulum_dataset.train).rmse < 1e-12


def test_score_matches_explicit_loops(pendulum_dataset, linear_config):
    model = SysIdService.train(linear_config, pendulum_dataset.train)
    total, count = 0.0, 0
    for traj in pendulum_dataset.test:
        for j in range(traj.length):
            predicted = model.predict(traj.states[j], traj.controls[j])
            for d in range(traj.states.shape[1]):
                total += (predicted[d] - traj.states[j + 1, d]) ** 2
                count += 1
    score = SysIdService.score(model, pendulum_dataset.test)
    assert score.rmse == pytest.approx(math.sqrt(total / count), rel=1e-12)
    assert score.n_points == sum(t.length for t in pendulum_dataset.test)


def test_non_finite_prediction_is_a_failure(pendulum_dataset):
    class Broken:
        def predict_inputs(self, inputs):
            return np.full((inputs.shape[0], 2), np.nan)

    score = SysIdService.score(Broken(), pendulum_dataset.test)
    assert score.failed and score.reason == "non-finite prediction"


def test_folds_partition_the_trajectories():
    folds = SysIdService.fold_indices(10, 3, seed=1)
    assert sorted(np.concatenate(folds).tolist()) == list(range(10))
    assert sorted(len(f) for f in folds) == [3, 3, 4]
    assert [f.tolist() for f in folds] == [f.tolist() for f in SysIdService.fold_indices(10, 3, seed=1)]


def test_cv_score(pendulum_dataset, linear_config):
    service = SysIdService(k_folds=3)
    score = service.cv_score(linear_config, pendulum_dataset.train, seed=0)
    assert len(score.per_fold) == 3
    assert score.rmse == pytest.approx(float(np.mean(score.per_fold)))
    assert score.n_points == sum(t.length for t in pendulum_dataset.train)
    assert service.cv_score(linear_config, pendulum_dataset.train, seed=0) == score

    with pytest.raises(ConfigError):
        service.cv_score(linear_config, pendulum_dataset.train, k=1)
    with pytest.raises(ConfigError):
        service.cv_score(linear_config, pendulum_dataset.train[:2], k=3)


def test_unknown_model_class_is_a_config_error(pendulum_dataset):
    config = Configuration(space_name="sysid_models", values={"model_class": "gp"})
    with pytest.raises(ConfigError):
        SysIdService(k_folds=2).evaluate_with_timeout(config, pendulum_dataset.train, budget=5.0)


def test_crash_becomes_failed_sentinel(monkeypatch, pendulum_dataset, linear_config):
    def explode(self, *args, **kwargs):
        raise RuntimeError("singular")

    monkeypatch.setattr(SysIdService, "cv_score", explode)
    score = SysIdService(k_folds=2).evaluate_with_timeout(linear_config, pendulum_dataset.train, budget=5.0)
    assert score.failed and score.reason == "crash: RuntimeError"


def test_timeout_becomes_failed_sentinel(monkeypatch, pendulum_dataset, linear_config):
    def slow(self, *args, **kwargs):
        time.sleep(5.0)
        return ModelScore(rmse=1.0)

    monkeypatch.setattr(SysIdService, "cv_score", slow)
    start = time.perf_counter()
    score = SysIdService(k_folds=2).evaluate_with_timeout(linear_config, pendulum_dataset.train, budget=0.2)
    assert score.failed and score.reason == "timeout"
    assert time.perf_counter() - start < 2.0

    with pytest.raises(ConfigError):
        SysIdService().evaluate_with_timeout(linear_config, pendulum_dataset.train, budget=0.0)


def test_time_limit_restores_previous_handler():
    before = signal.getsignal(signal.SIGALRM)
    with time_limit(10.0):
        pass
    assert signal.getsignal(signal.SIGALRM) is before


def test_mlp_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    params = init_params([3, 5, 2], seed=1)
    x = rng.normal(size=(7, 3))
    y = rng.normal(size=(7, 2))
    _, grads = loss_and_grads(params, x, y)
    eps = 1e-6
    for layer in range(len(params)):
        w, b = params[layer]
        for index in [(0, 0), (1, 1), (2, 0)][: w.shape[0]]:
            plus = [(pw.copy(), pb.copy()) for pw, pb in params]
            minus = [(pw.copy(), pb.copy()) for pw, pb in params]
            plus[layer][0][index] += eps
            minus[layer][0][index] -= eps
            numeric = (loss_and_grads(plus, x, y)[0] - loss_and_grads(minus, x, y)[0]) / (2 * eps)
            assert grads[layer][0][index] == pytest.approx(numeric, rel=1e-4, abs=1e-8)
        plus = [(pw.copy(), pb.copy()) for pw, pb in params]
        minus = [(pw.copy(), pb.copy()) for pw, pb in params]
        plus[layer][1][0] += eps
        minus[layer][1][0] -= eps
        numeric = (loss_and_grads(plus, x, y)[0] - loss_and_grads(minus, x, y)[0]) / (2 * eps)
        assert grads[layer][1][0] == pytest.approx(numeric, rel=1e-4, abs=1e-8)


def test_mlp_trains_to_a_finite_score(pendulum_dataset):
    model = SysIdService.train(MLP_CONFIG, pendulum_dataset.train)
    score = SysIdService.score(model, pendulum_dataset.test)
    assert not score.failed and math.isfinite(score.rmse)


@pytest.mark.parametrize("config", [POLY_CONFIG, MLP_CONFIG, knn_config(3, "inverse_distance")])
def test_model_files_reproduce_predictions(tmp_path, pendulum_dataset, config):
    model = SysIdService.train(config, pendulum_dataset.train)
    path = SysIdService.save_model(model, tmp_path / "model.json")
    restored = SysIdService.load_model(path)
    assert restored.model_class == config["model_class"]
    inputs = pendulum_dataset.test[0].inputs
    np.testing.assert_allclose(restored.predict_inputs(inputs), model.predict_inputs(inputs), rtol=1e-12)


def test_model_file_errors(tmp_path):
    with pytest.raises(MissingInputError):
        SysIdService.load_model(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{"model_class": "linear"}')
    with pytest.raises(ConfigError):
        SysIdService.load_model(bad)


def test_build_model_rejects_unknown_class():
    with pytest.raises(ConfigError):
        build_model(Configuration(space_name="sysid_models", values={"model_class": "gp"}), 2, 1)


def test_holdout_score(pendulum_dataset, linear_config):
    model, score = SysIdService().holdout_score(linear_config, pendulum_dataset)
    assert model.state_dim == 2 and model.control_dim == 1
    assert score.n_points == sum(t.length for t in pendulum_dataset.test)
    assert math.isfinite(score.rmse)


def test_holdout_needs_a_test_split(pendulum_system, linear_config):
    single = DynamicsService().generate_dataset(pendulum_system, n_traj=1, length=10, seed=0, name="single")
    assert single.test == []
    with pytest.raises(ConfigError, match="empty test split"):
        SysIdService().holdout_score(linear_config, single)
    four = DynamicsService().generate_dataset(pendulum_system, n_traj=4, length=10, seed=0, name="four")
    _, score = SysIdService().holdout_score(linear_config, four)
    assert not score.failed and score.n_points == 10
