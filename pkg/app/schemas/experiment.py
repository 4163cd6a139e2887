from typing import List, Optional

from pydantic import BaseModel, model_validator

from app.core.exceptions import ConfigError
from app.schemas.configspace import Configuration
from app.schemas.control import MPCConfig
from app.schemas.dynamics import SystemSpec
from app.schemas.sysid import ModelScore


class DatasetSpec(BaseModel):
    """How to generate one benchmark dataset"""
    name: Optional[str] = None
    system: str = "pendulum"  # benchmark name, see dynamics_service.BENCHMARKS
    gravity_scale: float = 1.0
    mass_scale: float = 1.0
    length_scale: float = 1.0
    part: Optional[str] = None
    n_traj: int = 100
    length: int = 200
    dt: float = 0.05
    seed: int = 0

    @model_validator(mode="after")
    def _check(self) -> "DatasetSpec":
        if self.n_traj < 1 or self.length < 1:
            raise ValueError("n_traj and length must be >= 1")
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        return self

    @property
    def identity(self) -> str:
        return self.name or f"{self.system}_s{self.seed}"

    def resolve(self) -> SystemSpec:
        from app.services.dynamics_service import DynamicsService

        return DynamicsService().resolve(
            self.system, self.gravity_scale, self.mass_scale, self.length_scale, part=self.part, dt=self.dt
        )

    def physics_key(self) -> tuple:
        """Resolved physics without the seed: two seeds of one system share a key"""
        from app.services.dynamics_service import DynamicsService

        return DynamicsService.physics_key(self.resolve())


class ControlStudySpec(BaseModel):
    task: str = "cartpole_swingup"
    dataset: Optional[DatasetSpec] = None  # defaults to the nominal cartpole
    sizes: List[int] = [0, 5, 10]
    seeds: List[int] = [0, 1, 2, 3, 4]
    episodes: int = 1
    mpc: MPCConfig = MPCConfig()


class ExperimentConfig(BaseModel):
    name: str = "study"
    output_dir: str = "runs/study"
    meta_datasets: List[DatasetSpec]
    test_datasets: List[DatasetSpec]
    seeds: List[int] = [0, 1, 2, 3, 4]
    k_folds: int = 3
    budget: int = 40
    portfolio_size: int = 10
    portfolio_sizes: List[int] = [5, 10, 15, 20]
    eval_timeout_s: float = 60.0
    harvest_seed: int = 0
    harvest_budget: Optional[int] = None  # meta tuning runs; defaults to budget
    space_file: Optional[str] = None  # model search space; the shipped one when unset
    control: Optional[ControlStudySpec] = None

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if not self.meta_datasets:
            raise ValueError("at least one meta dataset is required")
        largest = max([self.portfolio_size] + list(self.portfolio_sizes))
        if self.budget < largest:
            raise ValueError(f"budget {self.budget} is smaller than the largest portfolio size {largest}")
        if self.k_folds < 2:
            raise ValueError("k_folds must be >= 2")
        if self.harvest_budget is not None and self.harvest_budget < 1:
            raise ValueError("harvest_budget must be >= 1")
        names = [d.identity for d in self.meta_datasets + self.test_datasets]
        if len(set(names)) != len(names):
            raise ValueError("dataset names must be unique")
        try:
            meta_keys = {d.physics_key(): d.identity for d in self.meta_datasets}
            overlap = [(d.identity, meta_keys[d.physics_key()]) for d in self.test_datasets if d.physics_key() in meta_keys]
        except ConfigError as e:
            raise ValueError(str(e)) from e
        if overlap:
            test_id, meta_id = overlap[0]
            raise ValueError(f"test dataset {test_id} has the same physics as meta dataset {meta_id}")
        return self


class IncumbentRecord(BaseModel):
    """incumbent.json written next to each tuning trace"""
    dataset_id: str
    method: str
    seed: int
    config: Optional[Configuration] = None
    cv_score: Optional[float] = None
    test_score: Optional[ModelScore] = None


class PairedRunResult(BaseModel):
    dataset_id: str
    method: str  # the warmstarted method compared with pure BO
    seeds: List[int]
    pure_bo_final: List[Optional[float]]
    portfolio_final: List[Optional[float]]
    pure_bo_at_p: List[Optional[float]]
    portfolio_at_p: List[Optional[float]]
    threshold: Optional[float] = None  # median of the pure-BO finals
    pure_bo_iterations: List[Optional[int]] = []  # first iteration reaching the threshold
    portfolio_iterations: List[Optional[int]] = []

    @model_validator(mode="after")
    def _check(self) -> "PairedRunResult":
        n = len(self.seeds)
        if any(len(v) != n for v in (self.pure_bo_final, self.portfolio_final, self.pure_bo_at_p, self.portfolio_at_p)):
            raise ValueError("paired results need one value per seed for both methods")
        return self
