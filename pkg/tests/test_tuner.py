import math
import statistics

import numpy as np
import pytest

from app.core.exceptions import ConfigError, InvalidConfigurationError
from app.schemas.configspace import Configuration, ConfigurationSpace
from app.schemas.sysid import ModelScore
from app.services.configspace_service import ConfigSpaceService
from app.services.surrogate_service import SurrogateService
from app.services.tuner_service import TunerService, impute_failed, iteration_seed

from tests.conftest import toy_objective, toy_value


def normal_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / math.sqrt(2.0)))


def normal_pdf(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def small_tuner(**kwargs) -> TunerService:
    return TunerService(surrogate=SurrogateService(n_trees=10), pool_size=200, **kwargs)


# -- surrogate ----------------------------------------------------------------


def test_expected_improvement_closed_form():
    ei = SurrogateService.expected_improvement(np.array([0.0]), np.array([1.0]), 0.5)
    assert ei[0] == pytest.approx(0.5 * normal_cdf(0.5) + normal_pdf(0.5), rel=1e-12)


def test_expected_improvement_without_uncertainty():
    ei = SurrogateService.expected_improvement(np.array([0.2, 0.7]), np.array([0.0, 0.0]), 0.5)
    np.testing.assert_allclose(ei, [0.3, 0.0])


def test_expected_improvement_grows_with_uncertainty():
    std = np.linspace(0.1, 2.0, 20)
    ei = SurrogateService.expected_improvement(np.zeros(20), std, 0.0)
    assert np.all(ei >= 0) and np.all(np.diff(ei) > 0)


def test_constant_scores_leave_only_the_variance_floor():
    rng = np.random.default_rng(0)
    service = SurrogateService()
    state = service.fit(rng.uniform(size=(8, 3)), np.full(8, 3.0), seed=0)
    mean, variance = service.predict(state, rng.uniform(size=(5, 3)))
    np.testing.assert_allclose(mean, 0.0)
    np.testing.assert_allclose(variance, 1e-6)
    raw_mean, _ = service.predict_raw(state, rng.uniform(size=(2, 3)))
    np.testing.assert_allclose(raw_mean, 3.0)


def test_single_unpruned_tree_interpolates():
    rng = np.random.default_rng(1)
    points = rng.uniform(size=(10, 2))
    scores = rng.normal(size=10)
    service = SurrogateService(n_trees=1, min_leaf=1, max_features=1.0, bootstrap=False)
    state = service.fit(points, scores, seed=0)
    mean, variance = service.predict(state, points)
    np.testing.assert_allclose(mean, state.normalized, atol=1e-12)
    np.testing.assert_allclose(variance, service.variance_floor)


def test_forest_mean_is_the_tree_average():
    rng = np.random.default_rng(2)
    points = rng.uniform(size=(30, 4))
    service = SurrogateService()
    state = service.fit(points, points.sum(axis=1), seed=3)
    query = rng.uniform(size=(6, 4))
    mean, variance = service.predict(state, query)
    np.testing.assert_allclose(mean, state.forest.predict(query), rtol=1e-12)
    assert np.all(variance >= service.variance_floor)
    assert state.normalized.mean() == pytest.approx(0.0, abs=1e-12)


def test_surrogate_input_checks():
    service = SurrogateService()
    with pytest.raises(ConfigError):
        service.fit(np.zeros((1, 2)), np.zeros(1))
    with pytest.raises(ConfigError):
        service.fit(np.zeros((3, 2)), np.array([1.0, np.nan, 2.0]))


# -- tuner --------------------------------------------------------------------


def test_impute_failed():
    np.testing.assert_allclose(impute_failed([1.0, None, 3.0, float("nan")]), [1.0, 6.0, 3.0, 6.0])
    np.testing.assert_allclose(impute_failed([None, None]), [1.0, 1.0])


def test_iteration_seeds():
    assert iteration_seed(0, 1) == iteration_seed(0, 1)
    assert len({iteration_seed(0, i) for i in range(1, 50)}) == 49
    assert iteration_seed(0, 1) != iteration_seed(1, 1)


def test_portfolio_is_evaluated_verbatim_first(toy_space):
    initial = TunerService.random_initial_design(toy_space, 3, seed=99)
    incumbent, trace = small_tuner().tune(toy_space, toy_objective, 6, initial=initial, seed=0)
    assert [e.config for e in trace.entries[:3]] == initial
    assert trace.initial_design_kind == "portfolio"
    assert trace.method == "portfolio_3"
    assert len(trace.entries) == 6
    assert [e.iteration for e in trace.entries] == list(range(1, 7))
    best = min(trace.entries, key=lambda e: e.score.rmse)
    assert incumbent == best.config == trace.incumbent
    assert trace.incumbent_score == best.score.rmse


def test_pure_bo_uses_a_random_initial_design(toy_space):
    tuner = small_tuner(random_init_size=4)
    _, trace = tuner.tune(toy_space, toy_objective, 6, seed=5)
    assert trace.initial_design_kind == "random" and trace.method == "pure_bo"
    expected = TunerService.random_initial_design(toy_space, 4, seed=5)
    assert [e.config for e in trace.entries[:4]] == expected


def test_incumbent_curve_is_non_increasing(toy_space):
    _, trace = small_tuner().tune(toy_space, toy_objective, 12, seed=1)
    curve = trace.curve()
    assert all(b <= a for a, b in zip(curve, curve[1:]))
    assert curve[-1] == min(e.score.rmse for e in trace.entries)


def test_tuning_is_deterministic(toy_space):
    _, first = small_tuner().tune(toy_space, toy_objective, 10, seed=4, canonical=True)
    _, second = small_tuner().tune(toy_space, toy_objective, 10, seed=4, canonical=True)
    assert first == second
    assert all(e.wallclock == 0.0 for e in first.entries)


def test_objective_sees_the_run_seed(toy_space):
    seen = []

    def objective(config: Configuration, seed: int) -> ModelScore:
        seen.append(seed)
        return toy_objective(config, seed)

    small_tuner().tune(toy_space, objective, 7, seed=13)
    assert seen == [13] * 7


def test_all_failed_run_has_no_incumbent(toy_space):
    def failing(config: Configuration, seed: int) -> ModelScore:
        return ModelScore.failure("crash: RuntimeError")

    incumbent, trace = small_tuner().tune(toy_space, failing, 8, seed=0)
    assert incumbent is None and trace.incumbent is None
    assert len(trace.entries) == 8
    assert all(e.incumbent_score is None for e in trace.entries)


def test_failures_do_not_become_incumbents(toy_space):
    calls = []

    def flaky(config: Configuration, seed: int) -> ModelScore:
        calls.append(config)
        if len(calls) % 2:
            return ModelScore.failure("timeout")
        return toy_objective(config, seed)

    incumbent, trace = small_tuner().tune(toy_space, flaky, 8, seed=2)
    successful = [e for e in trace.entries if not e.score.failed]
    assert trace.incumbent_score == min(e.score.rmse for e in successful)
    assert toy_value(incumbent) == trace.incumbent_score


def test_tune_argument_checks(toy_space):
    tuner = small_tuner()
    initial = TunerService.random_initial_design(toy_space, 3, seed=0)
    with pytest.raises(ConfigError):
        tuner.tune(toy_space, toy_objective, 0)
    with pytest.raises(ConfigError):
        tuner.tune(toy_space, toy_objective, 2, initial=initial)
    bad = Configuration(space_name="toy", values={"kind": "a", "lr": 1e-3})
    with pytest.raises(InvalidConfigurationError):
        tuner.tune(toy_space, toy_objective, 4, initial=[bad])


def test_proposals_are_new_and_valid(toy_space):
    tuner = small_tuner(exploration_probability=0.0)
    configs = TunerService.random_initial_design(toy_space, 6, seed=0)
    state = tuner.fit_surrogate(toy_space, configs, [toy_value(c) for c in configs], seed=0)
    proposal = tuner.propose_next(toy_space, state, 0)
    assert ConfigSpaceService.validate(toy_space, proposal) == []
    assert proposal.key() not in {c.key() for c in configs}
    pool = tuner.acquisition_pool(toy_space, state, np.random.default_rng(0))
    assert len({c.key() for c in pool}) == len(pool)
    assert not {c.key() for c in pool} & {c.key() for c in configs}


def test_trace_file_matches_the_returned_trace(tmp_path, toy_space):
    path = tmp_path / "trace.jsonl"
    _, trace = small_tuner().tune(toy_space, toy_objective, 5, seed=0, dataset_id="toy_ds", trace_path=path)
    lines = path.read_text().splitlines()
    assert len(lines) == 7
    restored = TunerService.read_trace(path)
    assert restored.dataset_id == "toy_ds"
    assert [e.config for e in restored.entries] == [e.config for e in trace.entries]
    assert restored.curve() == trace.curve()
    assert restored.incumbent == trace.incumbent


BOWL_MINIMUM = {"x": 0.2, "y": 0.7, "z": 0.5}


def unit_space(*names: str) -> ConfigurationSpace:
    specs = [{"name": n, "kind": "continuous", "lower": 0.0, "upper": 1.0} for n in names]
    return ConfigurationSpace.model_validate({"name": "unit", "specs": specs})


def bowl_value(config: Configuration) -> float:
    return sum((config[k] - v) ** 2 for k, v in BOWL_MINIMUM.items())


@pytest.mark.slow
def test_bo_beats_random_search_on_a_3d_bowl():
    space = unit_space("x", "y", "z")
    bo, rs = [], []
    for seed in range(20):
        _, trace = TunerService(pool_size=500).tune(
            space, lambda c, s: ModelScore(rmse=bowl_value(c), n_points=1), 50, seed=seed
        )
        bo.append(trace.incumbent_score)
        rs.append(min(bowl_value(c) for c in TunerService.random_initial_design(space, 50, seed=seed)))
    assert statistics.median(bo) < statistics.median(rs)


@pytest.mark.slow
def test_bo_locates_a_1d_quadratic_minimum():
    space = unit_space("x")
    hits = 0
    for seed in range(20):
        incumbent, _ = TunerService(pool_size=500).tune(
            space, lambda c, s: ModelScore(rmse=(c["x"] - 0.37) ** 2, n_points=1), 30, seed=seed
        )
        hits += abs(incumbent["x"] - 0.37) <= 0.05
    assert hits >= 18
