"""
Learned one-step dynamics models f_h: (x_t, u_t) -> x_{t+1}.

Every model regresses the state difference on normalized (x, u) inputs and
returns x + predicted difference.
"""
from abc import ABC, abstractmethod
from typing import Any, Dict, Optional

import numpy as np

from app.core.exceptions import DimensionMismatchError
from app.schemas.configspace import Configuration
from app.schemas.sysid import ModelDocument

# internal seed for stochastic training, independent of any tuner seed
TRAINING_SEED = 0


class DynamicsModel(ABC):
    model_class: str = ""

    def __init__(self, config: Optional[Configuration], state_dim: int, control_dim: int):
        self.config = config
        self.state_dim = state_dim
        self.control_dim = control_dim
        self.input_mean = np.zeros(state_dim + control_dim)
        self.input_std = np.ones(state_dim + control_dim)

    @property
    def input_dim(self) -> int:
        return self.state_dim + self.control_dim

    @property
    def output_dim(self) -> int:
        return self.state_dim

    def fit(self, inputs: np.ndarray, next_states: np.ndarray) -> "DynamicsModel":
        inputs = np.asarray(inputs, dtype=float)
        self._check_inputs(inputs)
        self.input_mean = inputs.mean(axis=0)
        std = inputs.std(axis=0)
        # degenerate dims get std = 1
        self.input_std = np.where(std > 1e-12, std, 1.0)
        deltas = np.asarray(next_states, dtype=float) - inputs[:, : self.state_dim]
        self._fit(self.normalize(inputs), deltas)
        return self

    def normalize(self, inputs: np.ndarray) -> np.ndarray:
        return (inputs - self.input_mean) / self.input_std

    def predict_inputs(self, inputs: np.ndarray) -> np.ndarray:
        """Next states for rows of concatenated (x, u)"""
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        self._check_inputs(inputs)
        return inputs[:, : self.state_dim] + self._predict(self.normalize(inputs))

    def predict(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        single = x.ndim == 1
        out = self.predict_inputs(np.hstack([np.atleast_2d(x), np.atleast_2d(u)]))
        return out[0] if single else out

    def _check_inputs(self, inputs: np.ndarray) -> None:
        if inputs.ndim != 2 or inputs.shape[1] != self.input_dim:
            raise DimensionMismatchError(
                f"{self.model_class} model expects {self.input_dim} input columns, got shape {inputs.shape}"
            )

    @abstractmethod
    def _fit(self, z: np.ndarray, deltas: np.ndarray) -> None:
        ...

    @abstractmethod
    def _predict(self, z: np.ndarray) -> np.ndarray:
        ...

    @abstractmethod
    def get_params(self) -> Dict[str, Any]:
        """JSON-ready parameter arrays"""

    @abstractmethod
    def set_params(self, params: Dict[str, Any]) -> None:
        ...

    def to_document(self) -> ModelDocument:
        return ModelDocument(
            model_class=self.model_class,
            config=self.config,
            state_dim=self.state_dim,
            control_dim=self.control_dim,
            input_mean=self.input_mean.tolist(),
            input_std=self.input_std.tolist(),
            params=self.get_params(),
        )

    @classmethod
    def from_document(cls, document: ModelDocument) -> "DynamicsModel":
        model = cls(document.config, document.state_dim, document.control_dim)
        model.input_mean = np.asarray(document.input_mean, dtype=float)
        model.input_std = np.asarray(document.input_std, dtype=float)
        model.set_params(document.params)
        return model
