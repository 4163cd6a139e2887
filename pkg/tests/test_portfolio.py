from itertools import combinations

import numpy as np
import pytest
from pydantic import ValidationError

from app.core.exceptions import AllEvaluationsFailedError, ConfigError
from app.schemas.configspace import Configuration
from app.schemas.portfolio import CandidateSet, PerformanceMatrix, Portfolio
from app.schemas.sysid import ModelScore
from app.services.dynamics_service import DynamicsService
from app.services.portfolio_service import PortfolioService
from app.services.sysid_service import SysIdService


def knn(k: int) -> Configuration:
    return Configuration(space_name="sysid_models", values={"model_class": "knn", "knn.k": k, "knn.weighting": "uniform"})


def candidate_set(n: int) -> CandidateSet:
    return CandidateSet(configs=[knn(k + 1) for k in range(n)], provenance=[[f"meta_{k}"] for k in range(n)])


def reference_greedy(scores: np.ndarray, p: int):
    """Straightforward mean-of-min greedy over plain lists"""
    rows = scores.tolist()
    chosen, values = [], []
    for _ in range(min(p, len(rows[0]))):
        best = None
        for j in range(len(rows[0])):
            if j in chosen:
                continue
            value = sum(min([row[c] for c in chosen] + [row[j]]) for row in rows) / len(rows)
            if best is None or value < best[1]:
                best = (j, value)
        chosen.append(best[0])
        values.append(best[1])
    return chosen, values


class ScriptedSysId(SysIdService):
    """Cell scores looked up by (dataset name, knn.k); None marks a failed cell"""

    def __init__(self, table):
        super().__init__(k_folds=2, timeout_s=10.0)
        self.table = table

    def evaluate_with_timeout(self, config, trajectories, k=None, seed=0, budget=None):
        value = self.table[(self.current, config["knn.k"])]
        return ModelScore.failure("timeout") if value is None else ModelScore(rmse=value)


class DatasetAwareService(PortfolioService):
    def _cell(self, k, seed, cell):
        config, dataset = cell
        self.sysid.current = dataset.name
        return self.sysid.evaluate_with_timeout(config, dataset.train, k, seed)


@pytest.fixture
def tiny_meta(pendulum_system):
    service = DynamicsService()
    return [
        service.generate_dataset(pendulum_system, n_traj=4, length=5, seed=s, name=f"meta_{s}")
        for s in range(3)
    ]


def test_greedy_matches_reference():
    rng = np.random.default_rng(0)
    for _ in range(100):
        scores = rng.uniform(size=(6, 8))
        for p in (1, 3, 5, 8):
            chosen, trace = PortfolioService.greedy_order(scores, p)
            ref_chosen, ref_trace = reference_greedy(scores, p)
            assert chosen == ref_chosen
            np.testing.assert_allclose(trace, ref_trace, rtol=1e-12)
            assert all(b <= a for a, b in zip(trace, trace[1:]))
        # first pick is the best single column
        assert chosen[0] == int(np.argmin(scores.mean(axis=0)))


def test_greedy_pair_against_exhaustive_search():
    rng = np.random.default_rng(7)
    for _ in range(100):
        scores = rng.uniform(size=(6, 8))
        chosen, trace = PortfolioService.greedy_order(scores, 2)
        pairs = {
            (a, b): float(np.minimum(scores[:, a], scores[:, b]).mean()) for a, b in combinations(range(8), 2)
        }
        assert min(pairs.values()) <= trace[1] + 1e-12
        assert trace[1] == pytest.approx(min(v for pair, v in pairs.items() if chosen[0] in pair), abs=1e-12)
        assert trace[1] == pytest.approx(pairs[tuple(sorted(chosen))], abs=1e-12)


def test_greedy_is_not_exhaustive():
    scores = np.array([[0.2, 0.0, 1.0], [0.2, 1.0, 0.0]])
    chosen, trace = PortfolioService.greedy_order(scores, 2)
    assert chosen == [0, 1]
    assert trace == pytest.approx([0.2, 0.1])
    best_pair = min(np.minimum(scores[:, a], scores[:, b]).mean() for a, b in combinations(range(3), 2))
    assert best_pair == 0.0


def test_greedy_ties_go_to_the_lowest_index():
    scores = np.array([[0.0, 1.0, 0.5], [1.0, 0.0, 0.5]])
    chosen, trace = PortfolioService.greedy_order(scores, 3)
    assert chosen == [0, 1, 2]
    assert trace == [0.5, 0.0, 0.0]


def test_size_larger_than_candidates_returns_all():
    chosen, _ = PortfolioService.greedy_order(np.eye(3), 10)
    assert sorted(chosen) == [0, 1, 2]


def test_normalize_rows():
    matrix = PerformanceMatrix(
        dataset_ids=["a", "b"],
        config_ids=["c000", "c001", "c002"],
        scores=[[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]],
        imputed=[[False] * 3, [False] * 3],
    )
    normalized = PortfolioService.normalize_rows(matrix)
    assert normalized.scores == [[0.0, 0.5, 1.0], [0.0, 0.0, 0.0]]
    assert normalized.dataset_ids == matrix.dataset_ids


def test_portfolio_sizes_are_nested_prefixes():
    rng = np.random.default_rng(1)
    candidates = candidate_set(8)
    matrix = PerformanceMatrix(
        dataset_ids=[f"meta_{i}" for i in range(5)],
        config_ids=candidates.config_ids,
        scores=rng.uniform(size=(5, 8)).tolist(),
        imputed=[[False] * 8 for _ in range(5)],
    )
    service = PortfolioService(sysid=SysIdService(k_folds=2))
    portfolios = service.build_portfolios(matrix, [2, 4, 6], candidates)
    assert portfolios[6].configs[:4] == portfolios[4].configs
    assert portfolios[4].configs[:2] == portfolios[2].configs
    assert portfolios[6].matrix_hash == PortfolioService.matrix_hash(matrix)
    alone = service.greedy_select(PortfolioService.normalize_rows(matrix), 4, candidates)
    assert alone.configs == portfolios[4].configs
    with pytest.raises(ConfigError):
        service.greedy_select(matrix, 0, candidates)


def test_portfolio_sizes_5_to_20_nest():
    rng = np.random.default_rng(3)
    candidates = candidate_set(24)
    matrix = PerformanceMatrix(
        dataset_ids=[f"meta_{i}" for i in range(6)],
        config_ids=candidates.config_ids,
        scores=rng.uniform(size=(6, 24)).tolist(),
        imputed=[[False] * 24 for _ in range(6)],
    )
    portfolios = PortfolioService(sysid=SysIdService(k_folds=2)).build_portfolios(matrix, [5, 10, 15, 20], candidates)
    assert [len(portfolios[p].configs) for p in (5, 10, 15, 20)] == [5, 10, 15, 20]
    for small, large in ((5, 10), (10, 15), (15, 20)):
        assert portfolios[large].configs[:small] == portfolios[small].configs
        assert portfolios[large].selection_trace[:small] == portfolios[small].selection_trace


def test_collect_candidates_merges_duplicates():
    candidates = PortfolioService.collect_candidates(
        [("d1", knn(3)), ("d2", knn(5)), ("d3", knn(3)), ("d4", None)]
    )
    assert candidates.configs == [knn(3), knn(5)]
    assert candidates.provenance == [["d1", "d3"], ["d2"]]
    assert candidates.config_ids == ["c000", "c001"]
    with pytest.raises(AllEvaluationsFailedError):
        PortfolioService.collect_candidates([("d1", None)])


def test_matrix_imputes_failed_cells_and_drops_dead_rows(tiny_meta):
    table = {
        ("meta_0", 1): 0.1, ("meta_0", 2): None, ("meta_0", 3): 0.4,
        ("meta_1", 1): None, ("meta_1", 2): None, ("meta_1", 3): None,
        ("meta_2", 1): 0.3, ("meta_2", 2): 0.2, ("meta_2", 3): 0.5,
    }
    service = DatasetAwareService(sysid=ScriptedSysId(table), jobs=1)
    matrix = service.build_matrix(candidate_set(3), tiny_meta, k=2)
    assert matrix.dataset_ids == ["meta_0", "meta_2"]
    assert matrix.scores == [[0.1, 0.8, 0.4], [0.3, 0.2, 0.5]]
    assert matrix.imputed == [[False, True, False], [False, False, False]]

    dead = {key: None for key in table}
    with pytest.raises(AllEvaluationsFailedError):
        DatasetAwareService(sysid=ScriptedSysId(dead), jobs=1).build_matrix(candidate_set(3), tiny_meta, k=2)


def test_matrix_hash_tracks_content():
    base = PerformanceMatrix(dataset_ids=["a"], config_ids=["c000"], scores=[[0.5]], imputed=[[False]])
    changed = base.model_copy(update={"scores": [[0.6]]})
    assert PortfolioService.matrix_hash(base) == PortfolioService.matrix_hash(base.model_copy())
    assert PortfolioService.matrix_hash(base) != PortfolioService.matrix_hash(changed)


def test_schemas_reject_inconsistent_documents():
    with pytest.raises(ValidationError):
        CandidateSet(configs=[knn(1), knn(1)], provenance=[["a"], ["b"]])
    with pytest.raises(ValidationError):
        PerformanceMatrix(dataset_ids=["a"], config_ids=["c000"], scores=[[float("inf")]], imputed=[[False]])
    with pytest.raises(ValidationError):
        Portfolio(size=2, configs=[knn(1), knn(2)], selection_trace=[0.1, 0.2])


def test_portfolio_file(tmp_path):
    portfolio = Portfolio(size=2, configs=[knn(1), knn(2)], config_ids=["c000", "c001"], selection_trace=[0.3, 0.1])
    path = PortfolioService.write_portfolio(portfolio, tmp_path / "portfolio.json")
    assert PortfolioService.read_portfolio(path) == portfolio
    assert PortfolioService.portfolio_to_initial_design(portfolio) == [knn(1), knn(2)]
    assert PortfolioService.portfolio_to_initial_design(None) == []


def test_harvest_collects_one_incumbent_per_meta_dataset(tmp_path, tiny_meta, small_model_space):
    service = PortfolioService(sysid=SysIdService(k_folds=2, timeout_s=30.0), jobs=1)
    candidates = service.harvest(tiny_meta, budget=3, seed=0, space=small_model_space, trace_dir=tmp_path)
    assert 1 <= candidates.size <= 3
    assert sorted(d for p in candidates.provenance for d in p) == ["meta_0", "meta_1", "meta_2"]
    assert sorted(p.name for p in tmp_path.glob("*.jsonl")) == ["meta_0.jsonl", "meta_1.jsonl", "meta_2.jsonl"]
