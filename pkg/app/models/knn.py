from typing import Any, Dict

import numpy as np
from sklearn.neighbors import KNeighborsRegressor

from app.models.base import DynamicsModel

WEIGHTS = {"uniform": "uniform", "inverse_distance": "distance"}


class KNNModel(DynamicsModel):
    """Stores normalized training pairs; predicts the (weighted) neighbour mean"""
    model_class = "knn"

    def __init__(self, config, state_dim: int, control_dim: int):
        super().__init__(config, state_dim, control_dim)
        self.k = int(config["knn.k"]) if config is not None else 5
        self.weighting = str(config["knn.weighting"]) if config is not None else "uniform"
        self.train_z = np.zeros((0, self.input_dim))
        self.train_deltas = np.zeros((0, state_dim))
        self._regressor = None

    def _build(self) -> None:
        self._regressor = KNeighborsRegressor(
            n_neighbors=min(self.k, self.train_z.shape[0]),
            weights=WEIGHTS[self.weighting],
        )
        self._regressor.fit(self.train_z, self.train_deltas)

    def _fit(self, z: np.ndarray, deltas: np.ndarray) -> None:
        self.train_z = z
        self.train_deltas = deltas
        self._build()

    def _predict(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(self._regressor.predict(z)).reshape(z.shape[0], self.state_dim)

    def get_params(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "weighting": self.weighting,
            "train_z": self.train_z.tolist(),
            "train_deltas": self.train_deltas.tolist(),
        }

    def set_params(self, params: Dict[str, Any]) -> None:
        self.train_z = np.asarray(params["train_z"], dtype=float).reshape(-1, self.input_dim)
        self.train_deltas = np.asarray(params["train_deltas"], dtype=float).reshape(-1, self.state_dim)
        self._build()
