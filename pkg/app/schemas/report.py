import math
from typing import List, Optional

from pydantic import BaseModel, model_validator


class RunSummary(BaseModel):
    dataset_id: str
    method: str  # pure_bo | portfolio_<p>
    scores: List[float]  # per-seed final incumbent scores
    seeds: List[int] = []
    mean: float
    std: float  # sample std (n - 1); 0 for a single run

    @model_validator(mode="after")
    def _check(self) -> "RunSummary":
        if not self.scores:
            raise ValueError("a summary needs at least one score")
        n = len(self.scores)
        mean = sum(self.scores) / n
        std = math.sqrt(sum((s - mean) ** 2 for s in self.scores) / (n - 1)) if n > 1 else 0.0
        if abs(mean - self.mean) > 1e-12 * max(1.0, abs(mean)) or abs(std - self.std) > 1e-12 * max(1.0, std):
            raise ValueError("stored mean/std do not match the scores")
        return self


class WelchResult(BaseModel):
    t: float
    p: float
    df: float
    significant: bool


class ComparisonRow(BaseModel):
    """Pure BO against a warmstarted method on one dataset"""
    dataset_id: str
    baseline: RunSummary
    method: RunSummary
    gain: float
    welch: Optional[WelchResult] = None

    @property
    def star(self) -> str:
        return "*" if self.welch is not None and self.welch.significant else ""


class ControlRow(BaseModel):
    size: int  # 0 = pure BO
    scores: List[float]
    mean: float
    std: float
    gain: Optional[float] = None  # against size 0
    p: Optional[float] = None
