"""
Portfolio Service
Candidate harvesting from per-dataset tuning runs, the performance matrix and
greedy portfolio selection used as BO's initial design
"""
import logging
from functools import partial
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.config import settings
from app.core.exceptions import AllEvaluationsFailedError, ConfigError
from app.core.parallel import parallel_map
from app.schemas.configspace import Configuration, ConfigurationSpace
from app.schemas.dynamics import Dataset
from app.schemas.portfolio import CandidateSet, PerformanceMatrix, Portfolio
from app.schemas.sysid import ModelScore
from app.services.artifact_service import ArtifactService
from app.services.sysid_service import SysIdService
from app.services.tuner_service import TunerService

logger = logging.getLogger(__name__)


class PortfolioService:
    def __init__(
        self,
        sysid: Optional[SysIdService] = None,
        tuner: Optional[TunerService] = None,
        jobs: Optional[int] = None,
    ):
        self.sysid = sysid or SysIdService()
        self.tuner = tuner or TunerService()
        self.jobs = jobs or settings.jobs

    # -- candidates ----------------------------------------------------------

    def _harvest_one(
        self,
        space: ConfigurationSpace,
        budget: int,
        seed: int,
        trace_dir: Optional[Path],
        dataset: Dataset,
    ) -> Tuple[str, Optional[Configuration]]:
        trace_path = trace_dir / f"{dataset.name}.jsonl" if trace_dir is not None else None
        incumbent, _ = self.tuner.tune(
            space,
            self.sysid.objective(dataset.train),
            budget,
            initial=[],
            seed=seed,
            dataset_id=dataset.name,
            trace_path=trace_path,
            canonical=True,
        )
        return dataset.name, incumbent

    def harvest(
        self,
        meta_datasets: Sequence[Dataset],
        budget: int,
        seed: int,
        space: Optional[ConfigurationSpace] = None,
        trace_dir: Optional[Union[str, Path]] = None,
    ) -> CandidateSet:
        """Pure-BO tune on each meta dataset's train split and collect the incumbents"""
        if not meta_datasets:
            raise ConfigError("harvest needs at least one meta dataset")
        space = space or self.sysid.default_space()
        trace_dir = Path(trace_dir) if trace_dir is not None else None
        worker = partial(self._harvest_one, space, budget, seed, trace_dir)
        results = parallel_map(worker, meta_datasets, jobs=self.jobs)
        return self.collect_candidates(results)

    @staticmethod
    def collect_candidates(incumbents: Iterable[Tuple[str, Optional[Configuration]]]) -> CandidateSet:
        """Collapse identical incumbents, merging their provenance in first-seen order"""
        configs: Dict[str, Configuration] = {}
        provenance: Dict[str, List[str]] = {}
        for dataset_id, config in incumbents:
            if config is None:
                logger.warning(f"Every evaluation failed on {dataset_id}; it contributes no candidate")
                continue
            key = config.key()
            if key not in configs:
                configs[key] = config
                provenance[key] = []
            if dataset_id not in provenance[key]:
                provenance[key].append(dataset_id)
        if not configs:
            raise AllEvaluationsFailedError("No meta dataset produced a candidate configuration")
        logger.info(f"Collected {len(configs)} candidate configurations")
        return CandidateSet(configs=list(configs.values()), provenance=[provenance[k] for k in configs])

    # -- performance matrix --------------------------------------------------

    def _cell(self, k: int, seed: int, cell: Tuple[Configuration, Dataset]) -> ModelScore:
        config, dataset = cell
        return self.sysid.evaluate_with_timeout(config, dataset.train, k, seed)

    def build_matrix(
        self,
        candidates: CandidateSet,
        meta_datasets: Sequence[Dataset],
        k: Optional[int] = None,
        seed: int = 0,
    ) -> PerformanceMatrix:
        if candidates is None or not candidates.configs:
            raise ConfigError("candidate set is empty")
        if not meta_datasets:
            raise ConfigError("build_matrix needs at least one meta dataset")
        k = k or self.sysid.k_folds
        cells = [(config, dataset) for dataset in meta_datasets for config in candidates.configs]
        results = parallel_map(partial(self._cell, k, seed), cells, jobs=self.jobs)

        n_cols = len(candidates.configs)
        dataset_ids: List[str] = []
        rows: List[List[float]] = []
        masks: List[List[bool]] = []
        for i, dataset in enumerate(meta_datasets):
            row = results[i * n_cols:(i + 1) * n_cols]
            finite = [s.rmse for s in row if not s.failed]
            if not finite:
                logger.warning(f"Every candidate failed on {dataset.name}; dropping its matrix row")
                continue
            worst = max(finite)
            penalty = worst + abs(worst)
            mask = [s.failed for s in row]
            if any(mask):
                logger.warning(f"Imputed {sum(mask)} failed cells on {dataset.name} at {penalty:.6g}")
            dataset_ids.append(dataset.name)
            rows.append([penalty if s.failed else float(s.rmse) for s in row])
            masks.append(mask)

        if not rows:
            raise AllEvaluationsFailedError("Every matrix row failed; no performance matrix")
        return PerformanceMatrix(
            dataset_ids=dataset_ids,
            config_ids=candidates.config_ids,
            scores=rows,
            imputed=masks,
        )

    @staticmethod
    def normalize_rows(matrix: PerformanceMatrix) -> PerformanceMatrix:
        """Per-row min-max scaling to [0, 1]; constant rows become zeros"""
        scores = matrix.array
        lo = scores.min(axis=1, keepdims=True)
        span = scores.max(axis=1, keepdims=True) - lo
        normalized = np.where(span > 0, (scores - lo) / np.where(span > 0, span, 1.0), 0.0)
        return matrix.model_copy(update={"scores": normalized.tolist()})

    @staticmethod
    def matrix_hash(matrix: PerformanceMatrix) -> str:
        return ArtifactService.content_hash(matrix.model_dump(mode="json"))

    # -- selection -----------------------------------------------------------

    @staticmethod
    def greedy_order(scores: np.ndarray, p: int) -> Tuple[List[int], List[float]]:
        """Column indices chosen by greedy mean-of-min and the objective after each step"""
        scores = np.asarray(scores, dtype=float)
        n_rows, n_cols = scores.shape
        covered = np.full(n_rows, np.inf)
        chosen: List[int] = []
        trace: List[float] = []
        for _ in range(min(p, n_cols)):
            best_j, best_phi = -1, np.inf
            for j in range(n_cols):
                if j in chosen:
                    continue
                phi = float(np.mean(np.minimum(covered, scores[:, j])))
                if phi < best_phi:
                    best_j, best_phi = j, phi
            chosen.append(best_j)
            trace.append(best_phi)
            covered = np.minimum(covered, scores[:, best_j])
        return chosen, trace

    def greedy_select(
        self,
        normalized: PerformanceMatrix,
        p: int,
        candidates: CandidateSet,
        matrix_hash: Optional[str] = None,
    ) -> Portfolio:
        if p < 1:
            raise ConfigError(f"portfolio size must be >= 1, got {p}")
        if len(candidates.configs) != len(normalized.config_ids):
            raise ConfigError("candidate set does not match the matrix columns")
        chosen, trace = self.greedy_order(normalized.array, p)
        portfolio = Portfolio(
            size=p,
            configs=[candidates.configs[j] for j in chosen],
            config_ids=[normalized.config_ids[j] for j in chosen],
            provenance=[candidates.provenance[j] for j in chosen],
            selection_trace=trace,
            matrix_hash=matrix_hash,
        )
        logger.info(f"Selected portfolio of {len(portfolio.configs)} (requested {p}); final objective {trace[-1]:.4f}")
        return portfolio

    def build_portfolios(
        self,
        matrix: PerformanceMatrix,
        sizes: Sequence[int],
        candidates: CandidateSet,
    ) -> Dict[int, Portfolio]:
        """One greedy run at the largest size; smaller sizes are its prefixes"""
        if not sizes:
            return {}
        digest = self.matrix_hash(matrix)
        full = self.greedy_select(self.normalize_rows(matrix), max(sizes), candidates, matrix_hash=digest)
        return {size: full.prefix(size) for size in sizes}

    @staticmethod
    def portfolio_to_initial_design(portfolio: Optional[Portfolio]) -> List[Configuration]:
        return list(portfolio.configs) if portfolio is not None else []

    # -- files ---------------------------------------------------------------

    @staticmethod
    def write_portfolio(portfolio: Portfolio, path: Union[str, Path]) -> Path:
        return ArtifactService.write_document(portfolio, path)

    @staticmethod
    def read_portfolio(path: Union[str, Path]) -> Portfolio:
        return ArtifactService.read_document(Portfolio, path)

    @staticmethod
    def write_matrix(matrix: PerformanceMatrix, path: Union[str, Path]) -> Path:
        return ArtifactService.write_document(matrix, path)

    @staticmethod
    def read_matrix(path: Union[str, Path]) -> PerformanceMatrix:
        return ArtifactService.read_document(PerformanceMatrix, path)
