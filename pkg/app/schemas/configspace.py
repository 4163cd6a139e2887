"""
Configuration space documents: hyperparameter specs, spaces and concrete configurations
"""
import json
import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, StrictInt, StrictStr, model_validator

Value = Union[StrictInt, float, StrictStr]


class HyperparameterKind(str, Enum):
    CONTINUOUS = "continuous"
    INTEGER = "integer"
    CATEGORICAL = "categorical"


class Condition(BaseModel):
    """Child is active iff `parent` is active and takes one of `values`"""
    model_config = ConfigDict(frozen=True)

    parent: str
    values: List[Union[StrictInt, StrictStr]]


class HyperparameterSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    kind: HyperparameterKind
    lower: Optional[float] = None
    upper: Optional[float] = None
    log_scale: bool = False
    choices: List[Union[StrictInt, StrictStr]] = []
    default: Optional[Value] = None
    condition: Optional[Condition] = None

    @model_validator(mode="before")
    @classmethod
    def _fill_default(cls, data: Any) -> Any:
        if not isinstance(data, dict) or data.get("default") is not None:
            return data
        data = dict(data)
        kind = str(getattr(data.get("kind"), "value", data.get("kind")))
        lo, hi = data.get("lower"), data.get("upper")
        if kind == "categorical" and data.get("choices"):
            data["default"] = data["choices"][0]
        elif kind in ("continuous", "integer") and lo is not None and hi is not None:
            if data.get("log_scale") and lo > 0:
                mid = math.sqrt(lo * hi)
            else:
                mid = (lo + hi) / 2.0
            data["default"] = int(math.floor(mid + 0.5)) if kind == "integer" else float(mid)
        return data

    @model_validator(mode="after")
    def _check(self) -> "HyperparameterSpec":
        if self.kind == HyperparameterKind.CATEGORICAL:
            if len(set(self.choices)) < 2 or len(set(self.choices)) != len(self.choices):
                raise ValueError(f"{self.name}: categorical needs >= 2 distinct choices")
            if self.default not in self.choices:
                raise ValueError(f"{self.name}: default {self.default!r} is not a choice")
            return self
        if self.lower is None or self.upper is None:
            raise ValueError(f"{self.name}: bounded kinds need lower and upper")
        if not self.lower < self.upper:
            raise ValueError(f"{self.name}: lower must be < upper")
        if self.log_scale and self.lower <= 0:
            raise ValueError(f"{self.name}: log_scale requires lower > 0")
        if self.kind == HyperparameterKind.INTEGER:
            if self.lower != int(self.lower) or self.upper != int(self.upper):
                raise ValueError(f"{self.name}: integer bounds must be whole numbers")
            if not isinstance(self.default, int):
                raise ValueError(f"{self.name}: integer default must be an int")
        if isinstance(self.default, str) or not self.lower <= self.default <= self.upper:
            raise ValueError(f"{self.name}: default {self.default!r} out of bounds")
        return self

    @property
    def is_numeric(self) -> bool:
        return self.kind != HyperparameterKind.CATEGORICAL

    @property
    def width(self) -> int:
        """Number of encoding slots"""
        return len(self.choices) if self.kind == HyperparameterKind.CATEGORICAL else 1


class ConfigurationSpace(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    specs: Tuple[HyperparameterSpec, ...]

    @model_validator(mode="after")
    def _check(self) -> "ConfigurationSpace":
        seen: Dict[str, HyperparameterSpec] = {}
        for spec in self.specs:
            if spec.name in seen:
                raise ValueError(f"duplicate hyperparameter {spec.name}")
            if spec.condition is not None:
                # parents must be declared earlier, which also rules out cycles
                parent = seen.get(spec.condition.parent)
                if parent is None:
                    raise ValueError(
                        f"{spec.name}: condition parent {spec.condition.parent} "
                        "is not declared earlier"
                    )
                if parent.kind != HyperparameterKind.CATEGORICAL:
                    raise ValueError(f"{spec.name}: condition parent must be categorical")
                unknown = [v for v in spec.condition.values if v not in parent.choices]
                if unknown or not spec.condition.values:
                    raise ValueError(f"{spec.name}: condition values {unknown} not in parent choices")
            seen[spec.name] = spec
        return self

    def get(self, name: str) -> HyperparameterSpec:
        for spec in self.specs:
            if spec.name == name:
                return spec
        raise KeyError(name)

    @property
    def names(self) -> List[str]:
        return [spec.name for spec in self.specs]

    @property
    def dimension(self) -> int:
        return sum(spec.width for spec in self.specs)


class Configuration(BaseModel):
    model_config = ConfigDict(frozen=True)

    space_name: str
    values: Dict[str, Value] = Field(default_factory=dict)

    def __getitem__(self, name: str) -> Value:
        return self.values[name]

    def get(self, name: str, default: Any = None) -> Any:
        return self.values.get(name, default)

    def key(self) -> str:
        """Canonical identity (used to collapse duplicates)"""
        return json.dumps(
            {"space": self.space_name, "values": self.values},
            sort_keys=True,
            separators=(",", ":"),
        )

    def flat(self) -> str:
        """key=value rendering for trace files"""
        return " ".join(f"{k}={v}" for k, v in sorted(self.values.items()))

    def __hash__(self) -> int:
        return hash(self.key())


class Violation(BaseModel):
    name: str
    rule: str  # unknown | missing | inactive present | out of bounds | not a choice | wrong type | space mismatch
    detail: str = ""
