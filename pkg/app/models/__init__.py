# Registry of learned dynamics model classes, keyed by the model_class choice
from typing import Dict, Type

from app.core.exceptions import ConfigError
from app.schemas.configspace import Configuration
from app.schemas.sysid import ModelDocument

from .base import DynamicsModel
from .knn import KNNModel
from .linear import LinearModel, PolyRidgeModel
from .mlp import MLPModel
from .simulator import SimulatorModel

MODEL_CLASSES: Dict[str, Type[DynamicsModel]] = {
    "linear": LinearModel,
    "poly_ridge": PolyRidgeModel,
    "knn": KNNModel,
    "mlp": MLPModel,
}


def build_model(config: Configuration, state_dim: int, control_dim: int) -> DynamicsModel:
    model_class = config.get("model_class")
    if model_class not in MODEL_CLASSES:
        raise ConfigError(f"Unknown model class '{model_class}'")
    return MODEL_CLASSES[model_class](config, state_dim, control_dim)


def load_model(document: ModelDocument) -> DynamicsModel:
    if document.model_class == SimulatorModel.model_class:
        return SimulatorModel.from_document(document)
    if document.model_class not in MODEL_CLASSES:
        raise ConfigError(f"Unknown model class '{document.model_class}' in model file")
    return MODEL_CLASSES[document.model_class].from_document(document)


__all__ = [
    "DynamicsModel",
    "LinearModel", "PolyRidgeModel", "KNNModel", "MLPModel", "SimulatorModel",
    "MODEL_CLASSES", "build_model", "load_model",
]
