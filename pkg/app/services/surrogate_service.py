"""
Surrogate Service
Random-forest regression surrogate with across-tree variance and expected improvement
"""
import logging
from typing import List, Optional, Tuple

import numpy as np
from scipy.stats import norm
from sklearn.ensemble import RandomForestRegressor

from app.core.config import settings
from app.core.exceptions import ConfigError
from app.schemas.configspace import Configuration
from app.schemas.tuning import SurrogateState

logger = logging.getLogger(__name__)


class SurrogateService:
    def __init__(
        self,
        n_trees: Optional[int] = None,
        min_leaf: Optional[int] = None,
        max_features: Optional[float] = None,
        variance_floor: Optional[float] = None,
        bootstrap: bool = True,
    ):
        self.n_trees = n_trees or settings.surrogate_trees
        self.min_leaf = min_leaf or settings.surrogate_min_leaf
        self.max_features = max_features or settings.surrogate_max_features
        self.variance_floor = variance_floor if variance_floor is not None else settings.variance_floor
        self.bootstrap = bootstrap

    def fit(
        self,
        points: np.ndarray,
        scores: np.ndarray,
        seed: int = 0,
        configs: Optional[List[Configuration]] = None,
    ) -> SurrogateState:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        scores = np.asarray(scores, dtype=float).ravel()
        if points.shape[0] < 2:
            raise ConfigError(f"surrogate needs at least 2 observations, got {points.shape[0]}")
        if points.shape[0] != scores.shape[0]:
            raise ConfigError("point count must equal score count")
        if not np.all(np.isfinite(scores)):
            raise ConfigError("surrogate scores must be finite (impute failures first)")

        mean = float(scores.mean())
        std = float(scores.std())
        if std <= 1e-12:
            std = 1.0
        normalized = (scores - mean) / std

        forest = RandomForestRegressor(
            n_estimators=self.n_trees,
            min_samples_leaf=self.min_leaf,
            max_features=self.max_features,
            bootstrap=self.bootstrap,
            random_state=seed,
        )
        forest.fit(points, normalized)
        return SurrogateState(
            points=points,
            scores=scores,
            normalized=normalized,
            score_mean=mean,
            score_std=std,
            forest=forest,
            configs=list(configs or []),
        )

    def predict(self, state: SurrogateState, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Mean and variance in normalized score units"""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        per_tree = np.stack([tree.predict(points) for tree in state.forest.estimators_])
        return per_tree.mean(axis=0), per_tree.var(axis=0) + self.variance_floor

    def predict_raw(self, state: SurrogateState, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        mean, variance = self.predict(state, points)
        return mean * state.score_std + state.score_mean, variance * state.score_std ** 2

    @staticmethod
    def expected_improvement(mean: np.ndarray, std: np.ndarray, best: float) -> np.ndarray:
        """EI for minimization: (best - mu) Phi(z) + sigma phi(z), z = (best - mu) / sigma"""
        mean = np.asarray(mean, dtype=float)
        std = np.asarray(std, dtype=float)
        improvement = best - mean
        safe_std = np.where(std > 0, std, 1.0)
        z = improvement / safe_std
        ei = improvement * norm.cdf(z) + safe_std * norm.pdf(z)
        return np.where(std > 0, np.maximum(ei, 0.0), np.maximum(improvement, 0.0))
