"""
Benchmark systems, trajectories and datasets
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

Family = Literal["pendulum", "cartpole"]


class SystemParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    gravity: float = 9.81  # m/s^2
    mass_scales: Dict[str, float] = {}  # per body part, dimensionless
    length_scales: Dict[str, float] = {}  # per body part, dimensionless
    damping: float = 0.0  # N*m*s


class SystemSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    family: Family
    params: SystemParams
    dt: float = 0.05
    control_bounds: List[Tuple[float, float]]
    state_dim: int
    control_dim: int
    substeps: int = 20

    @model_validator(mode="after")
    def _check(self) -> "SystemSpec":
        if not self.dt > 0:
            raise ValueError("dt must be > 0")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        scales = list(self.params.mass_scales.values()) + list(self.params.length_scales.values())
        if any(not s > 0 for s in scales):
            raise ValueError("all scales must be > 0")
        if not self.params.gravity > 0:
            raise ValueError("gravity must be > 0")
        if len(self.control_bounds) != self.control_dim:
            raise ValueError("control_bounds needs one (lo, hi) pair per control dimension")
        for lo, hi in self.control_bounds:
            if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                raise ValueError(f"invalid control bounds ({lo}, {hi})")
        return self

    @property
    def u_low(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.control_bounds], dtype=float)

    @property
    def u_high(self) -> np.ndarray:
        return np.array([hi for _, hi in self.control_bounds], dtype=float)


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray  # (L+1, n)
    controls: np.ndarray  # (L, m)
    dt: float

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        controls = np.atleast_2d(np.asarray(self.controls, dtype=float))
        if states.shape[0] != controls.shape[0] + 1:
            raise ValueError(
                f"states has {states.shape[0]} rows, controls {controls.shape[0]}; "
                "expected exactly one more state than controls"
            )
        if not (np.all(np.isfinite(states)) and np.all(np.isfinite(controls))):
            raise ValueError("trajectory entries must be finite")
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "controls", controls)

    @property
    def length(self) -> int:
        return self.controls.shape[0]

    @property
    def inputs(self) -> np.ndarray:
        """(x_j, u_j) rows, j = 0..L-1"""
        return np.hstack([self.states[:-1], self.controls])

    @property
    def targets(self) -> np.ndarray:
        """x_{j+1} rows"""
        return self.states[1:]


@dataclass(frozen=True, eq=False)
class Dataset:
    name: str
    trajectories: List[Trajectory]
    system: SystemSpec
    seed: int
    split: Tuple[float, float, float] = (0.7, 0.15, 0.15)
    parts: Dict[str, List[int]] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.split) != 3 or any(not f > 0 for f in self.split):
            raise ValueError("split fractions must be three positive numbers")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ValueError(f"split fractions must sum to 1, got {sum(self.split)}")
        for traj in self.trajectories:
            if traj.states.shape[1] != self.system.state_dim or traj.controls.shape[1] != self.system.control_dim:
                raise ValueError("all trajectories must share the system's n and m")
            if abs(traj.dt - self.system.dt) > 1e-12:
                raise ValueError("all trajectories must share the system's dt")
        if not self.parts:
            object.__setattr__(self, "parts", split_indices(len(self.trajectories), self.split))

    @property
    def train(self) -> List[Trajectory]:
        return [self.trajectories[i] for i in self.parts["train"]]

    @property
    def valid(self) -> List[Trajectory]:
        return [self.trajectories[i] for i in self.parts["valid"]]

    @property
    def test(self) -> List[Trajectory]:
        return [self.trajectories[i] for i in self.parts["test"]]


def split_indices(count: int, split: Tuple[float, float, float]) -> Dict[str, List[int]]:
    """Contiguous whole-trajectory blocks in generation order; at least one test trajectory once count >= 2"""
    n_train = min(count, int(round(count * split[0])))
    n_valid = min(count - n_train, int(round(count * split[1])))
    if count >= 2 and n_train + n_valid == count:
        if n_valid > 0 and n_valid >= n_train:
            n_valid -= 1
        else:
            n_train -= 1
    return {
        "train": list(range(0, n_train)),
        "valid": list(range(n_train, n_train + n_valid)),
        "test": list(range(n_train + n_valid, count)),
    }
