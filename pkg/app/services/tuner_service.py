"""
Tuner Service
Bayesian optimization over a configuration space with a random or portfolio
initial design, producing a tuning trace and an incumbent
"""
import logging
import math
import time
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.core.config import settings
from app.core.exceptions import ConfigError
from app.schemas.configspace import Configuration, ConfigurationSpace
from app.schemas.sysid import ModelScore
from app.schemas.tuning import SurrogateState, TraceEntry, TuningTrace
from app.services.artifact_service import ArtifactService
from app.services.configspace_service import ConfigSpaceService
from app.services.surrogate_service import SurrogateService

logger = logging.getLogger(__name__)

Objective = Callable[[Configuration, int], ModelScore]

# imputed score while no evaluation has succeeded yet
NO_FINITE_SCORE = 1.0


def iteration_seed(seed: int, iteration: int) -> int:
    return int(np.random.SeedSequence([seed, iteration]).generate_state(1)[0])


def impute_failed(scores: Sequence[Optional[float]]) -> np.ndarray:
    """Failed entries (None / non-finite) become twice the worst finite score"""
    finite = [s for s in scores if s is not None and math.isfinite(s)]
    if finite:
        worst = max(finite)
        penalty = worst + abs(worst)
    else:
        penalty = NO_FINITE_SCORE
    return np.array([s if s is not None and math.isfinite(s) else penalty for s in scores], dtype=float)


class TunerService:
    def __init__(
        self,
        surrogate: Optional[SurrogateService] = None,
        pool_size: Optional[int] = None,
        perturbations: Optional[int] = None,
        perturbation_scale: Optional[float] = None,
        exploration_probability: Optional[float] = None,
        random_init_size: Optional[int] = None,
    ):
        self.surrogate = surrogate or SurrogateService()
        self.pool_size = pool_size if pool_size is not None else settings.candidate_pool_size
        self.perturbations = perturbations if perturbations is not None else settings.incumbent_perturbations
        self.perturbation_scale = perturbation_scale or settings.perturbation_scale
        self.exploration_probability = (
            exploration_probability if exploration_probability is not None else settings.exploration_probability
        )
        self.random_init_size = random_init_size or settings.random_init_size

    @staticmethod
    def random_initial_design(space: ConfigurationSpace, n: int, seed: int) -> List[Configuration]:
        rng = np.random.default_rng(seed)
        return [ConfigSpaceService.sample(space, rng) for _ in range(n)]

    # -- acquisition ---------------------------------------------------------

    def acquisition_pool(
        self,
        space: ConfigurationSpace,
        state: SurrogateState,
        rng: np.random.Generator,
    ) -> List[Configuration]:
        """Seeded random samples plus incumbent perturbations, minus already observed points"""
        pool = [ConfigSpaceService.sample(space, rng) for _ in range(self.pool_size)]
        incumbent = state.incumbent
        if incumbent is not None and self.perturbations > 0:
            pool += ConfigSpaceService.neighbours(
                space, incumbent, self.perturbations, rng, scale=self.perturbation_scale
            )
        observed = {c.key() for c in state.configs}
        unique: Dict[str, Configuration] = {}
        for config in pool:
            key = config.key()
            if key not in observed and key not in unique:
                unique[key] = config
        return list(unique.values())

    def expected_improvement_of(
        self,
        space: ConfigurationSpace,
        state: SurrogateState,
        candidates: Sequence[Configuration],
    ) -> np.ndarray:
        points = np.vstack([ConfigSpaceService.encode(space, c) for c in candidates])
        mean, variance = self.surrogate.predict(state, points)
        return self.surrogate.expected_improvement(mean, np.sqrt(variance), state.best_normalized)

    def propose_next(
        self,
        space: ConfigurationSpace,
        state: Optional[SurrogateState],
        rng_seed: Union[int, np.random.Generator],
    ) -> Configuration:
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
        if state is None or state.size < 2:
            return ConfigSpaceService.sample(space, rng)
        if rng.random() < self.exploration_probability:
            return ConfigSpaceService.sample(space, rng)
        candidates = self.acquisition_pool(space, state, rng)
        if not candidates:
            return ConfigSpaceService.sample(space, rng)
        ei = self.expected_improvement_of(space, state, candidates)
        return candidates[int(np.argmax(ei))]

    def fit_surrogate(
        self,
        space: ConfigurationSpace,
        configs: Sequence[Configuration],
        scores: Sequence[Optional[float]],
        seed: int,
    ) -> SurrogateState:
        points = np.vstack([ConfigSpaceService.encode(space, c) for c in configs])
        return self.surrogate.fit(points, impute_failed(scores), seed=seed, configs=list(configs))

    # -- main loop -----------------------------------------------------------

    def tune(
        self,
        space: ConfigurationSpace,
        objective: Objective,
        budget: int,
        initial: Optional[Sequence[Configuration]] = None,
        seed: int = 0,
        dataset_id: Optional[str] = None,
        method: Optional[str] = None,
        trace_path: Optional[Union[str, Path]] = None,
        canonical: bool = False,
    ) -> Tuple[Optional[Configuration], TuningTrace]:
        """Evaluate the initial design verbatim, then propose -> evaluate until `budget`.

        An empty `initial` means pure BO with a seeded random initial design.
        The objective receives the run seed so every configuration sees the same folds.
        """
        initial = list(initial or [])
        if budget < 1:
            raise ConfigError(f"budget must be >= 1, got {budget}")
        if budget < len(initial):
            raise ConfigError(f"budget {budget} is smaller than the initial design ({len(initial)})")
        for config in initial:
            ConfigSpaceService.check(space, config)

        if initial:
            kind = "portfolio"
            design = initial
        else:
            kind = "random"
            design = self.random_initial_design(space, min(self.random_init_size, budget), seed)
        trace = TuningTrace(
            seed=seed,
            initial_design_kind=kind,
            budget_iterations=budget,
            dataset_id=dataset_id,
            method=method or ("pure_bo" if kind == "random" else f"portfolio_{len(initial)}"),
        )
        if trace_path is not None:
            ArtifactService.start_jsonl(trace_path)
            ArtifactService.append_jsonl(trace.header_record(), trace_path)

        configs: List[Configuration] = []
        scores: List[Optional[float]] = []
        entries: List[TraceEntry] = []
        incumbent: Optional[Configuration] = None
        incumbent_score: Optional[float] = None

        for iteration in range(1, budget + 1):
            it_seed = iteration_seed(seed, iteration)
            if iteration <= len(design):
                config = design[iteration - 1]
            else:
                state = self.fit_surrogate(space, configs, scores, it_seed) if len(configs) >= 2 else None
                config = self.propose_next(space, state, it_seed)

            start = time.perf_counter()
            score = objective(config, seed)
            wallclock = time.perf_counter() - start

            value = None if score.failed or not math.isfinite(score.rmse) else score.rmse
            if value is not None and (incumbent_score is None or value < incumbent_score):
                incumbent, incumbent_score = config, value

            configs.append(config)
            scores.append(value)
            entry = TraceEntry(
                iteration=iteration,
                config=config,
                score=score,
                wallclock=0.0 if canonical else wallclock,
                incumbent_score=incumbent_score,
            )
            entries.append(entry)
            if trace_path is not None:
                ArtifactService.append_jsonl(self.iteration_record(entry), trace_path)
            logger.debug(f"[{trace.method} seed {seed}] it {iteration}: {value} (incumbent {incumbent_score})")

        trace = trace.model_copy(update={"entries": entries, "incumbent": incumbent})
        if trace_path is not None:
            ArtifactService.append_jsonl(self.summary_record(trace), trace_path)
        if incumbent is None:
            logger.warning(f"All {budget} evaluations failed ({trace.method}, seed {seed})")
        else:
            logger.info(f"Tuning finished ({trace.method}, seed {seed}): incumbent score {incumbent_score:.6g}")
        return incumbent, trace

    # -- trace files ---------------------------------------------------------

    @staticmethod
    def iteration_record(entry: TraceEntry) -> Dict[str, Any]:
        return {
            "record": "iteration",
            "iteration": entry.iteration,
            "space_name": entry.config.space_name,
            "config": entry.config.values,
            "config_flat": entry.config.flat(),
            "score": entry.score.rmse,
            "per_fold": entry.score.per_fold,
            "n_points": entry.score.n_points,
            "reason": entry.score.reason,
            "wallclock": entry.wallclock,
            "incumbent_score": entry.incumbent_score,
        }

    @staticmethod
    def summary_record(trace: TuningTrace) -> Dict[str, Any]:
        return {
            "record": "summary",
            "incumbent": trace.incumbent.values if trace.incumbent else None,
            "incumbent_score": trace.incumbent_score,
            "n_entries": len(trace.entries),
        }

    @staticmethod
    def write_trace(trace: TuningTrace, path: Union[str, Path], canonical: bool = False) -> Path:
        path = ArtifactService.start_jsonl(path)
        ArtifactService.append_jsonl(trace.header_record(), path)
        for entry in trace.entries:
            if canonical:
                entry = entry.model_copy(update={"wallclock": 0.0})
            ArtifactService.append_jsonl(TunerService.iteration_record(entry), path)
        ArtifactService.append_jsonl(TunerService.summary_record(trace), path)
        return path

    @staticmethod
    def read_trace(path: Union[str, Path]) -> TuningTrace:
        """Rebuild a trace from its records; partial traces (no summary) are accepted"""
        records = ArtifactService.read_jsonl(path)
        if not records or records[0].get("record") != "header":
            raise ConfigError(f"{path} does not start with a trace header record")
        header = records[0]
        entries = []
        incumbent = None
        for record in records[1:]:
            if record["record"] == "iteration":
                config = Configuration(space_name=record["space_name"], values=record["config"])
                score = ModelScore(
                    rmse=record["score"],
                    per_fold=record.get("per_fold") or [],
                    n_points=record.get("n_points") or 0,
                    reason=record.get("reason"),
                )
                entries.append(
                    TraceEntry(
                        iteration=record["iteration"],
                        config=config,
                        score=score,
                        wallclock=record.get("wallclock", 0.0),
                        incumbent_score=record["incumbent_score"],
                    )
                )
            elif record["record"] == "summary" and record.get("incumbent") is not None:
                space_name = entries[0].config.space_name if entries else ""
                incumbent = Configuration(space_name=space_name, values=record["incumbent"])
        return TuningTrace(
            seed=header["seed"],
            initial_design_kind=header["initial_design_kind"],
            budget_iterations=header["budget_iterations"],
            dataset_id=header.get("dataset_id"),
            method=header.get("method", "pure_bo"),
            entries=entries,
            incumbent=incumbent,
        )
