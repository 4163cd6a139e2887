from typing import Any, Dict

import numpy as np

from app.models.base import DynamicsModel
from app.schemas.dynamics import SystemSpec
from app.schemas.sysid import ModelDocument
from app.services.dynamics_service import DynamicsService


class SimulatorModel(DynamicsModel):
    """The true simulator exposed as a dynamics model (the "perfect" model)"""
    model_class = "simulator"

    def __init__(self, system: SystemSpec):
        super().__init__(None, system.state_dim, system.control_dim)
        self.system = system

    def predict_inputs(self, inputs: np.ndarray) -> np.ndarray:
        inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
        self._check_inputs(inputs)
        n = self.state_dim
        out = np.full((inputs.shape[0], n), np.nan)
        # rows that already diverged stay NaN instead of failing the whole batch
        finite = np.all(np.isfinite(inputs), axis=1)
        if finite.any():
            out[finite] = DynamicsService.step(self.system, inputs[finite, :n], inputs[finite, n:])
        return out

    def _fit(self, z: np.ndarray, deltas: np.ndarray) -> None:
        pass

    def _predict(self, z: np.ndarray) -> np.ndarray:
        raise NotImplementedError("SimulatorModel predicts through predict_inputs")

    def get_params(self) -> Dict[str, Any]:
        return {"system": self.system.model_dump(mode="json")}

    def set_params(self, params: Dict[str, Any]) -> None:
        self.system = SystemSpec.model_validate(params["system"])

    @classmethod
    def from_document(cls, document: ModelDocument) -> "SimulatorModel":
        return cls(SystemSpec.model_validate(document.params["system"]))
