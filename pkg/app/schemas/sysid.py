from typing import Any, Dict, List, Optional

from pydantic import BaseModel

from app.schemas.configspace import Configuration


class ModelScore(BaseModel):
    """One-step RMSE; `rmse is None` is the failed sentinel (crash or timeout)"""
    rmse: Optional[float] = None
    per_fold: List[float] = []
    n_points: int = 0
    reason: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.rmse is None

    @classmethod
    def failure(cls, reason: str, n_points: int = 0) -> "ModelScore":
        return cls(rmse=None, n_points=n_points, reason=reason)


class ModelDocument(BaseModel):
    """Self-describing trained model file"""
    model_class: str
    config: Optional[Configuration] = None
    state_dim: int
    control_dim: int
    input_mean: List[float]
    input_std: List[float]
    params: Dict[str, Any] = {}
