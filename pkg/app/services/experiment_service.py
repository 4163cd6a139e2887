"""
Experiment Service
Desk-scale studies: warmstart efficiency, portfolio-size sweep and model-to-controller transfer
"""
import logging
import statistics
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import yaml
from pydantic import ValidationError

from app.core.config import settings
from app.core.exceptions import ConfigError, MissingInputError
from app.core.parallel import parallel_map
from app.models import DynamicsModel
from app.schemas.configspace import ConfigurationSpace
from app.schemas.control import ControlReport, MPCConfig
from app.schemas.dynamics import Dataset
from app.schemas.experiment import (
    ControlStudySpec,
    DatasetSpec,
    ExperimentConfig,
    IncumbentRecord,
    PairedRunResult,
)
from app.schemas.portfolio import CandidateSet, PerformanceMatrix, Portfolio
from app.schemas.report import ControlRow, RunSummary
from app.schemas.tuning import TuningTrace
from app.services.artifact_service import ArtifactService
from app.services.configspace_service import ConfigSpaceService
from app.services.control_service import ControlService
from app.services.dynamics_service import DynamicsService
from app.services.portfolio_service import PortfolioService
from app.services.report_service import ReportService
from app.services.sysid_service import SysIdService
from app.services.tuner_service import TunerService

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def method_name(size: int) -> str:
    return "pure_bo" if size == 0 else f"portfolio_{size}"


class ExperimentService:
    def __init__(self, config: Optional[ExperimentConfig] = None, jobs: Optional[int] = None):
        self.config = config
        self.jobs = jobs or settings.jobs
        k = config.k_folds if config else None
        timeout = config.eval_timeout_s if config else None
        self.sysid = SysIdService(k_folds=k, timeout_s=timeout)
        self.tuner = TunerService()
        self.portfolio = PortfolioService(sysid=self.sysid, tuner=self.tuner, jobs=self.jobs)
        self.dynamics = DynamicsService()
        self.control = ControlService()
        self.report = ReportService()

    @staticmethod
    def load_config(path: PathLike) -> ExperimentConfig:
        path = Path(path)
        if not path.is_file():
            raise MissingInputError(f"Experiment config not found: {path}")
        try:
            return ExperimentConfig.model_validate(yaml.safe_load(path.read_text(encoding="utf-8")))
        except (ValidationError, yaml.YAMLError) as e:
            raise ConfigError(f"Invalid experiment config {path}: {e}") from e

    def _require_config(self) -> ExperimentConfig:
        if self.config is None:
            raise ConfigError("this study needs an experiment config")
        return self.config

    @property
    def root(self) -> Path:
        return Path(self._require_config().output_dir)

    def model_space(self) -> ConfigurationSpace:
        if self.config is not None and self.config.space_file:
            if not Path(self.config.space_file).is_file():
                raise MissingInputError(f"Search space file not found: {self.config.space_file}")
            return ConfigSpaceService.load_space(self.config.space_file)
        return self.sysid.default_space()

    # -- datasets ------------------------------------------------------------

    def make_dataset(self, spec: DatasetSpec) -> Dataset:
        system = self.dynamics.resolve(
            spec.system, spec.gravity_scale, spec.mass_scale, spec.length_scale, part=spec.part, dt=spec.dt
        )
        return self.dynamics.generate_dataset(
            system, spec.n_traj, spec.length, spec.seed, split=settings.split, name=spec.identity, jobs=self.jobs
        )

    def prepare_datasets(self) -> Tuple[List[Dataset], List[Dataset]]:
        config = self._require_config()
        meta_keys = {d.physics_key() for d in config.meta_datasets}
        if any(d.physics_key() in meta_keys for d in config.test_datasets):
            raise ConfigError("meta and test datasets share physics")
        out = self.root / "datasets"
        meta, test = [], []
        for specs, bucket in ((config.meta_datasets, meta), (config.test_datasets, test)):
            for spec in specs:
                dataset = self.make_dataset(spec)
                self.dynamics.write_dataset(dataset, out / f"{dataset.name}.csv")
                bucket.append(dataset)
        return meta, test

    # -- single tuning run ---------------------------------------------------

    def tune_run(
        self,
        dataset: Dataset,
        budget: int,
        seed: int,
        portfolio: Optional[Portfolio] = None,
        space: Optional[ConfigurationSpace] = None,
        out_dir: Optional[PathLike] = None,
        canonical: bool = True,
    ) -> Tuple[TuningTrace, IncumbentRecord, Optional[DynamicsModel]]:
        """Tune on the train split, then retrain the incumbent and score it on the test split.

        Returns the retrained incumbent model too (None when every evaluation failed).
        Writes trace.jsonl, incumbent.json and model.json into `out_dir` when given.
        """
        space = space or self.model_space()
        initial = PortfolioService.portfolio_to_initial_design(portfolio)
        method = method_name(portfolio.size if portfolio is not None else 0)
        out_dir = Path(out_dir) if out_dir is not None else None
        incumbent, trace = self.tuner.tune(
            space,
            self.sysid.objective(dataset.train),
            budget,
            initial=initial,
            seed=seed,
            dataset_id=dataset.name,
            method=method,
            trace_path=out_dir / "trace.jsonl" if out_dir else None,
            canonical=canonical,
        )
        record = IncumbentRecord(dataset_id=dataset.name, method=method, seed=seed, config=incumbent)
        model = None
        if incumbent is not None:
            model, test_score = self.sysid.holdout_score(incumbent, dataset)
            record = record.model_copy(update={"cv_score": trace.incumbent_score, "test_score": test_score})
            if out_dir is not None:
                self.sysid.save_model(model, out_dir / "model.json")
        if out_dir is not None:
            ArtifactService.write_document(record, out_dir / "incumbent.json")
        return trace, record, model

    def _study_run(
        self,
        portfolios: Dict[int, Portfolio],
        budget: int,
        job: Tuple[Dataset, int, int],
    ) -> TuningTrace:
        dataset, size, seed = job
        out_dir = self.root / "runs" / dataset.name / method_name(size) / f"seed_{seed}"
        trace, _, _ = self.tune_run(dataset, budget, seed, portfolio=portfolios.get(size), out_dir=out_dir)
        return trace

    def run_grid(
        self,
        datasets: Sequence[Dataset],
        portfolios: Dict[int, Portfolio],
        sizes: Sequence[int],
        seeds: Sequence[int],
    ) -> List[TuningTrace]:
        """Every (dataset, method, seed) triple; independent, so run through the worker pool"""
        config = self._require_config()
        jobs = [(d, size, seed) for d in datasets for size in sizes for seed in seeds]
        worker = partial(self._study_run, portfolios, config.budget)
        return parallel_map(worker, jobs, jobs=self.jobs)

    # -- portfolio -----------------------------------------------------------

    def build_portfolios(
        self,
        meta: Sequence[Dataset],
        sizes: Sequence[int],
    ) -> Tuple[CandidateSet, PerformanceMatrix, Dict[int, Portfolio]]:
        config = self._require_config()
        candidates = self.portfolio.harvest(
            meta,
            config.harvest_budget or config.budget,
            config.harvest_seed,
            space=self.model_space(),
            trace_dir=self.root / "harvest",
        )
        matrix = self.portfolio.build_matrix(candidates, meta, config.k_folds, config.harvest_seed)
        portfolios = self.portfolio.build_portfolios(matrix, [s for s in sizes if s > 0], candidates)

        out = self.root / "portfolio"
        ArtifactService.write_document(candidates, out / "candidates.json")
        self.portfolio.write_matrix(matrix, out / "matrix.json")
        for size, portfolio in portfolios.items():
            self.portfolio.write_portfolio(portfolio, out / f"portfolio_p{size}.json")
        return candidates, matrix, portfolios

    # -- studies -------------------------------------------------------------

    @staticmethod
    def paired_results(traces: Sequence[TuningTrace], p: int) -> List[PairedRunResult]:
        groups = ReportService.group_traces(traces)
        results = []
        for (dataset_id, method), group in groups.items():
            if method == "pure_bo" or (dataset_id, "pure_bo") not in groups:
                continue
            warm = {t.seed: t for t in group}
            pure = {t.seed: t for t in groups[(dataset_id, "pure_bo")]}
            seeds = sorted(set(warm) & set(pure))
            finals = [pure[s].incumbent_score for s in seeds if pure[s].incumbent_score is not None]
            threshold = statistics.median(finals) if finals else None
            results.append(
                PairedRunResult(
                    dataset_id=dataset_id,
                    method=method,
                    seeds=seeds,
                    pure_bo_final=[pure[s].incumbent_score for s in seeds],
                    portfolio_final=[warm[s].incumbent_score for s in seeds],
                    pure_bo_at_p=[pure[s].incumbent_at(p) for s in seeds],
                    portfolio_at_p=[warm[s].incumbent_at(p) for s in seeds],
                    threshold=threshold,
                    pure_bo_iterations=[
                        pure[s].iterations_to(threshold) if threshold is not None else None for s in seeds
                    ],
                    portfolio_iterations=[
                        warm[s].iterations_to(threshold) if threshold is not None else None for s in seeds
                    ],
                )
            )
        return results

    def run_warmstart_study(self) -> List[PairedRunResult]:
        """Pure BO against warmstarted BO (default size) on every test dataset, paired by seed"""
        config = self._require_config()
        meta, test = self.prepare_datasets()
        p = config.portfolio_size
        _, _, portfolios = self.build_portfolios(meta, [p])
        traces = self.run_grid(test, portfolios, [0, p], config.seeds)

        results = self.paired_results(traces, p)
        out = self.root / "report"
        ArtifactService.write_json([r.model_dump(mode="json") for r in results], out / "paired.json")
        rows = self.report.comparison_rows(traces)
        frame = self.report.comparison_frame(rows)
        self.report.write_table(frame, out / "warmstart.txt")
        self.report.write_table(frame, out / "warmstart.csv", fmt="csv")
        for (dataset_id, method), group in ReportService.group_traces(traces).items():
            self.report.export_curves(group, out / "curves" / f"{dataset_id}_{method}.csv")
        logger.info(f"Warmstart study finished: {len(results)} paired comparisons")
        return results

    def run_size_sweep(self, sizes: Optional[Sequence[int]] = None) -> Dict[int, List[RunSummary]]:
        """Per portfolio size (0 = pure BO), one summary per test dataset; portfolios share one matrix"""
        config = self._require_config()
        sizes = sorted(set(sizes if sizes is not None else [0] + list(config.portfolio_sizes)))
        if any(s > config.budget for s in sizes):
            raise ConfigError(f"budget {config.budget} is smaller than a requested portfolio size")
        meta, test = self.prepare_datasets()
        _, _, portfolios = self.build_portfolios(meta, sizes)
        traces = self.run_grid(test, portfolios, sizes, config.seeds)

        summaries: Dict[int, List[RunSummary]] = {}
        for (dataset_id, method), group in ReportService.group_traces(traces).items():
            size = 0 if method == "pure_bo" else int(method.split("_", 1)[1])
            summaries.setdefault(size, []).append(self.report.summarize(group))
        out = self.root / "report"
        frame = self.report.size_frame(traces)
        self.report.write_table(frame, out / "sizes.txt")
        self.report.write_table(frame, out / "sizes.csv", fmt="csv")
        return summaries

    def _control_run(
        self,
        dataset: Dataset,
        portfolios: Dict[int, Portfolio],
        task_name: str,
        mpc: MPCConfig,
        episodes: int,
        budget: int,
        job: Tuple[int, int],
    ) -> ControlReport:
        size, seed = job
        out_dir = self.root / "control" / method_name(size) / f"seed_{seed}"
        _, _, model = self.tune_run(dataset, budget, seed, portfolio=portfolios.get(size), out_dir=out_dir)
        task = self.control.task(task_name, system=dataset.system)
        if model is None:
            result = self.control.evaluate_zero_controller(task, episodes, seed)
        else:
            result = self.control.evaluate_controller(model, task, mpc, episodes, seed)
        return ControlReport(
            task=task.name,
            model_id=str(out_dir / "model.json"),
            mpc_config=mpc,
            seed=seed,
            episodes=result.episodes,
            episode_costs=result.episode_costs,
            raw_cost=result.raw_cost,
            worst_ref=self.control.worst_reference(task),
            score=result.score,
            method=method_name(size),
            dataset_id=dataset.name,
        )

    def run_control_study(self) -> List[ControlRow]:
        """Models tuned at each portfolio size, evaluated with the fixed CEM controller"""
        config = self._require_config()
        spec = config.control or ControlStudySpec()
        meta, _ = self.prepare_datasets()
        dataset_spec = spec.dataset or DatasetSpec(name="control_cartpole", system="cartpole", seed=1000)
        dataset = self.make_dataset(dataset_spec)
        self.dynamics.write_dataset(dataset, self.root / "datasets" / f"{dataset.name}.csv")
        _, _, portfolios = self.build_portfolios(meta, spec.sizes)

        worker = partial(self._control_run, dataset, portfolios, spec.task, spec.mpc, spec.episodes, config.budget)
        reports = parallel_map(worker, [(size, seed) for size in spec.sizes for seed in spec.seeds], jobs=self.jobs)

        results_path = ArtifactService.start_jsonl(self.root / "control" / "control_results.jsonl")
        for report in reports:
            ArtifactService.append_jsonl(report.model_dump(mode="json"), results_path)
        rows = self.report.control_rows(reports)
        frame = self.report.control_frame(rows)
        self.report.write_table(frame, self.root / "report" / "control.txt")
        self.report.write_table(frame, self.root / "report" / "control.csv", fmt="csv")
        return rows
