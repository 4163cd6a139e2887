import math
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, model_validator

from app.schemas.configspace import Configuration


class CandidateSet(BaseModel):
    configs: List[Configuration]
    provenance: List[List[str]]  # per config, the meta datasets whose tuning produced it

    @model_validator(mode="after")
    def _check(self) -> "CandidateSet":
        if not self.configs:
            raise ValueError("candidate set is empty")
        if len(self.provenance) != len(self.configs):
            raise ValueError("one provenance list per configuration is required")
        keys = [c.key() for c in self.configs]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate configurations in candidate set")
        return self

    @property
    def size(self) -> int:
        return len(self.configs)

    @property
    def config_ids(self) -> List[str]:
        return [f"c{j:03d}" for j in range(len(self.configs))]


class PerformanceMatrix(BaseModel):
    dataset_ids: List[str]
    config_ids: List[str]
    scores: List[List[float]]  # rows = datasets, columns = candidates
    imputed: List[List[bool]]

    @model_validator(mode="after")
    def _check(self) -> "PerformanceMatrix":
        rows, cols = len(self.dataset_ids), len(self.config_ids)
        if len(self.scores) != rows or any(len(r) != cols for r in self.scores):
            raise ValueError(f"scores must be {rows} x {cols}")
        if len(self.imputed) != rows or any(len(r) != cols for r in self.imputed):
            raise ValueError(f"imputed mask must be {rows} x {cols}")
        if any(not math.isfinite(v) for r in self.scores for v in r):
            raise ValueError("matrix entries must be finite after imputation")
        return self

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.scores, dtype=float).reshape(len(self.dataset_ids), len(self.config_ids))


class Portfolio(BaseModel):
    size: int  # requested p
    configs: List[Configuration]
    config_ids: List[str] = []
    provenance: List[List[str]] = []
    selection_trace: List[float] = []
    matrix_hash: Optional[str] = None

    @model_validator(mode="after")
    def _check(self) -> "Portfolio":
        if len(self.selection_trace) != len(self.configs):
            raise ValueError("selection_trace needs one value per configuration")
        if any(b > a for a, b in zip(self.selection_trace, self.selection_trace[1:])):
            raise ValueError("selection_trace must be non-increasing")
        keys = [c.key() for c in self.configs]
        if len(set(keys)) != len(keys):
            raise ValueError("portfolio repeats a configuration")
        return self

    def prefix(self, size: int) -> "Portfolio":
        return self.model_copy(
            update={
                "size": size,
                "configs": self.configs[:size],
                "config_ids": self.config_ids[:size],
                "provenance": self.provenance[:size],
                "selection_trace": self.selection_trace[:size],
            }
        )
