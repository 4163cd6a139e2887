import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, model_validator

from app.schemas.configspace import Configuration
from app.schemas.sysid import ModelScore

InitialDesignKind = Literal["random", "portfolio"]


class TraceEntry(BaseModel):
    iteration: int  # 1-based, every objective call counts
    config: Configuration
    score: ModelScore
    wallclock: float = 0.0  # seconds
    incumbent_score: Optional[float] = None  # None while every evaluation so far failed


class TuningTrace(BaseModel):
    seed: int
    initial_design_kind: InitialDesignKind
    budget_iterations: int
    dataset_id: Optional[str] = None
    method: str = "pure_bo"
    entries: List[TraceEntry] = []
    incumbent: Optional[Configuration] = None

    @model_validator(mode="after")
    def _check(self) -> "TuningTrace":
        if len(self.entries) > self.budget_iterations:
            raise ValueError(f"{len(self.entries)} entries exceed the budget of {self.budget_iterations}")
        previous = math.inf
        for entry in self.entries:
            current = math.inf if entry.incumbent_score is None else entry.incumbent_score
            if current > previous:
                raise ValueError(f"incumbent score increased at iteration {entry.iteration}")
            previous = current
        return self

    @property
    def incumbent_score(self) -> Optional[float]:
        return self.entries[-1].incumbent_score if self.entries else None

    def incumbent_at(self, iteration: int) -> Optional[float]:
        """Incumbent score after `iteration` evaluations (clamped to the trace length)"""
        if not self.entries or iteration < 1:
            return None
        return self.entries[min(iteration, len(self.entries)) - 1].incumbent_score

    def curve(self) -> List[float]:
        return [math.inf if e.incumbent_score is None else e.incumbent_score for e in self.entries]

    def iterations_to(self, threshold: float) -> Optional[int]:
        """First iteration whose incumbent is at or below `threshold`"""
        for entry in self.entries:
            if entry.incumbent_score is not None and entry.incumbent_score <= threshold:
                return entry.iteration
        return None

    def header_record(self) -> Dict[str, Any]:
        return {
            "record": "header",
            "seed": self.seed,
            "initial_design_kind": self.initial_design_kind,
            "budget_iterations": self.budget_iterations,
            "dataset_id": self.dataset_id,
            "method": self.method,
        }


@dataclass(eq=False)
class SurrogateState:
    points: np.ndarray  # (k, d) encoded configurations
    scores: np.ndarray  # (k,) raw scores after failure imputation
    normalized: np.ndarray  # (k,) zero-mean unit-variance scores
    score_mean: float
    score_std: float
    forest: Any  # fitted regressor
    configs: List[Configuration] = field(default_factory=list)

    def __post_init__(self):
        if self.points.shape[0] != self.scores.shape[0]:
            raise ValueError("point count must equal score count")

    @property
    def size(self) -> int:
        return int(self.points.shape[0])

    @property
    def best_normalized(self) -> float:
        return float(np.min(self.normalized))

    @property
    def incumbent(self) -> Optional[Configuration]:
        if not self.configs:
            return None
        return self.configs[int(np.argmin(self.scores))]
