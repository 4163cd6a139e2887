"""
System Identification Service
Trains one-step dynamics models and computes the one-step RMSE model score,
its K-fold cross-validated estimate and the time-limited variant used by tuning
"""
import logging
import signal
import threading
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from app.core.config import settings
from app.core.exceptions import ConfigError, EvaluationTimeoutError, MissingInputError
from app.models import DynamicsModel, build_model, load_model
from app.schemas.configspace import Configuration, ConfigurationSpace
from app.schemas.dynamics import Dataset, Trajectory
from app.schemas.sysid import ModelDocument, ModelScore
from app.services.configspace_service import ConfigSpaceService

logger = logging.getLogger(__name__)

DEFAULT_SPACE_PATH = Path(__file__).resolve().parent.parent / "data" / "model_space.yaml"


@contextmanager
def time_limit(seconds: float) -> Iterator[None]:
    """Raise EvaluationTimeoutError inside the block after `seconds` (main thread only)"""
    def signal_handler(signum, frame):
        raise EvaluationTimeoutError("Time limit reached.")

    previous = signal.signal(signal.SIGALRM, signal_handler)
    signal.setitimer(signal.ITIMER_REAL, seconds)
    try:
        yield
    finally:
        signal.setitimer(signal.ITIMER_REAL, 0)
        signal.signal(signal.SIGALRM, previous)


def stack_pairs(trajectories: Sequence[Trajectory]) -> Tuple[np.ndarray, np.ndarray]:
    """(x, u) input rows and next-state targets, pairs taken within each trajectory"""
    if not trajectories:
        raise ConfigError("no trajectories to stack")
    inputs = np.vstack([traj.inputs for traj in trajectories])
    targets = np.vstack([traj.targets for traj in trajectories])
    return inputs, targets


class SysIdService:
    def __init__(self, k_folds: Optional[int] = None, timeout_s: Optional[float] = None):
        self.k_folds = k_folds or settings.k_folds
        self.timeout_s = timeout_s if timeout_s is not None else settings.eval_timeout_s

    @staticmethod
    def default_space() -> ConfigurationSpace:
        return ConfigSpaceService.load_space(DEFAULT_SPACE_PATH)

    # -- training and scoring ------------------------------------------------

    @staticmethod
    def train(config: Configuration, trajectories: Sequence[Trajectory]) -> DynamicsModel:
        if not trajectories:
            raise ConfigError("cannot train on empty data")
        inputs, targets = stack_pairs(trajectories)
        state_dim = targets.shape[1]
        model = build_model(config, state_dim, inputs.shape[1] - state_dim)
        return model.fit(inputs, targets)

    @staticmethod
    def score(model: DynamicsModel, trajectories: Sequence[Trajectory]) -> ModelScore:
        """Pooled one-step RMSE over every (trajectory, step, state dimension)"""
        inputs, targets = stack_pairs(trajectories)
        predicted = model.predict_inputs(inputs)
        squared = (predicted - targets) ** 2
        if not np.all(np.isfinite(squared)):
            return ModelScore.failure("non-finite prediction", n_points=targets.shape[0])
        return ModelScore(rmse=float(np.sqrt(np.mean(squared))), n_points=targets.shape[0])

    @staticmethod
    def fold_indices(count: int, k: int, seed: int) -> List[np.ndarray]:
        """Seeded shuffle of trajectory indices into K near-equal folds"""
        permutation = np.random.default_rng(seed).permutation(count)
        return [np.sort(fold) for fold in np.array_split(permutation, k)]

    def cv_score(
        self,
        config: Configuration,
        trajectories: Sequence[Trajectory],
        k: Optional[int] = None,
        seed: int = 0,
    ) -> ModelScore:
        k = k or self.k_folds
        if k < 2:
            raise ConfigError(f"K must be >= 2, got {k}")
        if len(trajectories) < k:
            raise ConfigError(f"{len(trajectories)} trajectories cannot fill {k} folds")

        per_fold: List[float] = []
        n_points = 0
        for held_out in self.fold_indices(len(trajectories), k, seed):
            held = set(held_out.tolist())
            train = [traj for i, traj in enumerate(trajectories) if i not in held]
            test = [trajectories[i] for i in held_out]
            fold_score = self.score(self.train(config, train), test)
            n_points += fold_score.n_points
            if fold_score.failed:
                return ModelScore.failure(fold_score.reason or "fold failed", n_points=n_points)
            per_fold.append(fold_score.rmse)
        return ModelScore(rmse=float(np.mean(per_fold)), per_fold=per_fold, n_points=n_points)

    def evaluate_with_timeout(
        self,
        config: Configuration,
        trajectories: Sequence[Trajectory],
        k: Optional[int] = None,
        seed: int = 0,
        budget: Optional[float] = None,
    ) -> ModelScore:
        """cv_score, or the failed sentinel on timeout or a crash during training"""
        budget = budget if budget is not None else self.timeout_s
        if not budget > 0:
            raise ConfigError(f"evaluation budget must be > 0 seconds, got {budget}")

        start = time.perf_counter()
        try:
            if threading.current_thread() is threading.main_thread():
                with time_limit(budget):
                    result = self.cv_score(config, trajectories, k, seed)
            else:
                result = self.cv_score(config, trajectories, k, seed)
        except EvaluationTimeoutError:
            logger.warning(f"Evaluation timed out after {budget}s: {config.flat()}")
            return ModelScore.failure("timeout")
        except ConfigError:
            raise
        except Exception as e:
            logger.warning(f"Evaluation crashed ({type(e).__name__}: {e}): {config.flat()}")
            return ModelScore.failure(f"crash: {type(e).__name__}")

        if time.perf_counter() - start > budget:
            logger.warning(f"Evaluation exceeded {budget}s: {config.flat()}")
            return ModelScore.failure("timeout", n_points=result.n_points)
        return result

    def objective(
        self,
        trajectories: Sequence[Trajectory],
        k: Optional[int] = None,
        budget: Optional[float] = None,
    ) -> "CVObjective":
        return CVObjective(self, list(trajectories), k or self.k_folds, budget)

    def holdout_score(self, config: Configuration, dataset: Dataset) -> Tuple[DynamicsModel, ModelScore]:
        """Retrain on train + valid and score on the held-out test split"""
        if not dataset.test:
            raise ConfigError(f"Dataset {dataset.name} has an empty test split ({len(dataset.trajectories)} trajectories)")
        model = self.train(config, dataset.train + dataset.valid)
        return model, self.score(model, dataset.test)

    # -- model files ---------------------------------------------------------

    @staticmethod
    def save_model(model: DynamicsModel, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(model.to_document().model_dump_json(indent=2), encoding="utf-8")
        return path

    @staticmethod
    def load_model(path: Union[str, Path]) -> DynamicsModel:
        path = Path(path)
        if not path.is_file():
            raise MissingInputError(f"Model file not found: {path}")
        try:
            document = ModelDocument.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError as e:
            raise ConfigError(f"Invalid model file {path}: {e}") from e
        return load_model(document)


class CVObjective:
    """Picklable tuning objective: (configuration, seed) -> time-limited cv score"""

    def __init__(self, service: SysIdService, trajectories: List[Trajectory], k: int, budget: Optional[float]):
        self.service = service
        self.trajectories = trajectories
        self.k = k
        self.budget = budget

    def __call__(self, config: Configuration, seed: int) -> ModelScore:
        return self.service.evaluate_with_timeout(config, self.trajectories, self.k, seed, self.budget)
