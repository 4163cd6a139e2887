import math
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, model_validator

from app.schemas.dynamics import SystemSpec


class ControlTask(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    system: SystemSpec
    start_state: List[float]
    goal_state: List[float]
    q: List[float]  # diagonal state weights
    r: List[float]  # diagonal control weights
    episode_length: int = 200
    success_threshold: float  # episode cost mapped to score 0
    angle_dims: List[int] = []  # state dimensions compared modulo 2*pi

    @model_validator(mode="after")
    def _check(self) -> "ControlTask":
        n, m = self.system.state_dim, self.system.control_dim
        if len(self.start_state) != n or len(self.goal_state) != n or len(self.q) != n:
            raise ValueError(f"start, goal and Q need {n} entries")
        if len(self.r) != m:
            raise ValueError(f"R needs {m} entries")
        if any(w < 0 for w in self.q + self.r):
            raise ValueError("Q and R entries must be >= 0")
        if self.episode_length < 1:
            raise ValueError("episode_length must be >= 1")
        if not self.success_threshold > 0:
            raise ValueError("success_threshold must be > 0")
        if any(not 0 <= d < n for d in self.angle_dims):
            raise ValueError("angle_dims out of range")
        return self


class MPCConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    horizon: int = 20
    samples: int = 200
    elite_fraction: float = 0.1
    cem_iterations: int = 4
    control_noise_std: Optional[List[float]] = None  # default: quarter of the control range

    @model_validator(mode="after")
    def _check(self) -> "MPCConfig":
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.samples < 2:
            raise ValueError("samples must be >= 2")
        if not 0 < self.elite_fraction <= 1:
            raise ValueError("elite_fraction must be in (0, 1]")
        if self.cem_iterations < 1:
            raise ValueError("cem_iterations must be >= 1")
        if self.control_noise_std is not None and any(not s > 0 for s in self.control_noise_std):
            raise ValueError("control_noise_std entries must be > 0")
        return self

    @property
    def elite_count(self) -> int:
        return max(1, math.ceil(self.elite_fraction * self.samples))


class ControlScore(BaseModel):
    score: float  # [0, 10], lower is better
    raw_cost: float
    episodes: int
    episode_costs: List[float] = []


class ControlReport(BaseModel):
    """One line of the control results file"""
    task: str
    model_id: str
    mpc_config: MPCConfig
    seed: int
    episodes: int
    episode_costs: List[float]
    raw_cost: float
    worst_ref: float
    score: float
    method: Optional[str] = None
    dataset_id: Optional[str] = None
