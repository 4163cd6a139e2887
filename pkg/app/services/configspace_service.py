"""
Configuration Space Service
Sampling, validation and the fixed-width vector encoding used by the surrogate
"""
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import yaml
from pydantic import ValidationError

from app.core.exceptions import ConfigError, DimensionMismatchError, InvalidConfigurationError
from app.schemas.configspace import (
    Configuration,
    ConfigurationSpace,
    HyperparameterKind,
    HyperparameterSpec,
    Value,
    Violation,
)

logger = logging.getLogger(__name__)

INACTIVE = -1.0


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


class ConfigSpaceService:
    @staticmethod
    def is_active(spec: HyperparameterSpec, values: Dict[str, Value]) -> bool:
        """Active iff unconditioned, or the parent is present with an activating value"""
        if spec.condition is None:
            return True
        parent_value = values.get(spec.condition.parent)
        return parent_value is not None and parent_value in spec.condition.values

    @staticmethod
    def to_unit(spec: HyperparameterSpec, value: float) -> float:
        lo, hi, v = float(spec.lower), float(spec.upper), float(value)
        if spec.log_scale:
            lo, hi, v = math.log(lo), math.log(hi), math.log(v)
        return (v - lo) / (hi - lo)

    @staticmethod
    def from_unit(spec: HyperparameterSpec, u: float) -> Union[int, float]:
        u = min(max(float(u), 0.0), 1.0)
        lo, hi = float(spec.lower), float(spec.upper)
        if spec.log_scale:
            value = math.exp(math.log(lo) + u * (math.log(hi) - math.log(lo)))
        else:
            value = lo + u * (hi - lo)
        value = min(max(value, lo), hi)
        if spec.kind == HyperparameterKind.INTEGER:
            return min(max(_round_half_up(value), int(lo)), int(hi))
        return float(value)

    @staticmethod
    def _sample_value(spec: HyperparameterSpec, rng: np.random.Generator) -> Value:
        if spec.kind == HyperparameterKind.CATEGORICAL:
            return spec.choices[int(rng.integers(len(spec.choices)))]
        if spec.kind == HyperparameterKind.INTEGER:
            lo, hi = int(spec.lower), int(spec.upper)
            if spec.log_scale:
                value = math.exp(rng.uniform(math.log(lo), math.log(hi)))
                return min(max(_round_half_up(value), lo), hi)
            return int(rng.integers(lo, hi + 1))
        if spec.log_scale:
            return float(math.exp(rng.uniform(math.log(spec.lower), math.log(spec.upper))))
        return float(rng.uniform(spec.lower, spec.upper))

    @staticmethod
    def sample(
        space: ConfigurationSpace,
        rng_seed: Union[int, np.random.Generator],
    ) -> Configuration:
        """Draw one configuration; inactive children are omitted"""
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
        values: Dict[str, Value] = {}
        for spec in space.specs:
            if ConfigSpaceService.is_active(spec, values):
                values[spec.name] = ConfigSpaceService._sample_value(spec, rng)
        return Configuration(space_name=space.name, values=values)

    @staticmethod
    def default_configuration(space: ConfigurationSpace) -> Configuration:
        values: Dict[str, Value] = {}
        for spec in space.specs:
            if ConfigSpaceService.is_active(spec, values):
                values[spec.name] = spec.default
        return Configuration(space_name=space.name, values=values)

    @staticmethod
    def validate(space: ConfigurationSpace, config: Configuration) -> List[Violation]:
        violations: List[Violation] = []
        if config.space_name != space.name:
            violations.append(
                Violation(name="<space>", rule="space mismatch", detail=f"{config.space_name} != {space.name}")
            )
        known = set(space.names)
        for name in config.values:
            if name not in known:
                violations.append(Violation(name=name, rule="unknown"))

        for spec in space.specs:
            present = spec.name in config.values
            active = ConfigSpaceService.is_active(spec, config.values)
            if active and not present:
                violations.append(Violation(name=spec.name, rule="missing"))
                continue
            if not active:
                if present:
                    violations.append(Violation(name=spec.name, rule="inactive present"))
                continue

            value = config.values[spec.name]
            if spec.kind == HyperparameterKind.CATEGORICAL:
                if value not in spec.choices:
                    violations.append(
                        Violation(name=spec.name, rule="not a choice", detail=f"{value!r} not in {spec.choices}")
                    )
                continue
            if isinstance(value, str) or isinstance(value, bool):
                violations.append(Violation(name=spec.name, rule="wrong type", detail=repr(value)))
                continue
            if spec.kind == HyperparameterKind.INTEGER and not isinstance(value, int):
                violations.append(Violation(name=spec.name, rule="wrong type", detail=f"{value!r} is not an int"))
                continue
            if not (math.isfinite(value) and spec.lower <= value <= spec.upper):
                violations.append(
                    Violation(
                        name=spec.name,
                        rule="out of bounds",
                        detail=f"{value!r} not in [{spec.lower}, {spec.upper}]",
                    )
                )
        return violations

    @staticmethod
    def check(space: ConfigurationSpace, config: Configuration) -> None:
        violations = ConfigSpaceService.validate(space, config)
        if violations:
            raise InvalidConfigurationError(violations)

    @staticmethod
    def encode(space: ConfigurationSpace, config: Configuration) -> np.ndarray:
        """One-hot categoricals, unit-scaled numerics, -1 in every inactive slot"""
        ConfigSpaceService.check(space, config)
        vector = np.full(space.dimension, INACTIVE, dtype=float)
        offset = 0
        for spec in space.specs:
            if spec.name in config.values:
                value = config.values[spec.name]
                if spec.kind == HyperparameterKind.CATEGORICAL:
                    vector[offset:offset + spec.width] = 0.0
                    vector[offset + spec.choices.index(value)] = 1.0
                else:
                    vector[offset] = ConfigSpaceService.to_unit(spec, value)
            offset += spec.width
        return vector

    @staticmethod
    def decode(space: ConfigurationSpace, vector: np.ndarray) -> Configuration:
        vector = np.asarray(vector, dtype=float).ravel()
        if vector.shape[0] != space.dimension:
            raise DimensionMismatchError(
                f"vector has {vector.shape[0]} entries, space {space.name} encodes to {space.dimension}"
            )
        values: Dict[str, Value] = {}
        offset = 0
        for spec in space.specs:
            block = vector[offset:offset + spec.width]
            offset += spec.width
            if not ConfigSpaceService.is_active(spec, values):
                continue
            if spec.kind == HyperparameterKind.CATEGORICAL:
                values[spec.name] = spec.choices[int(np.argmax(block))]
            else:
                u = 0.0 if block[0] == INACTIVE else block[0]
                values[spec.name] = ConfigSpaceService.from_unit(spec, u)
        return Configuration(space_name=space.name, values=values)

    @staticmethod
    def neighbours(
        space: ConfigurationSpace,
        config: Configuration,
        count: int,
        rng_seed: Union[int, np.random.Generator],
        scale: float = 0.1,
    ) -> List[Configuration]:
        """Local perturbations: each neighbour changes one active hyperparameter.

        Numerics move by a Gaussian step of `scale` in unit space, categoricals switch
        to another choice; children activated by the change are sampled, orphaned
        ones are dropped.
        """
        rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
        active = [spec for spec in space.specs if spec.name in config.values]
        result: List[Configuration] = []
        for _ in range(count):
            spec = active[int(rng.integers(len(active)))]
            values = dict(config.values)
            if spec.kind == HyperparameterKind.CATEGORICAL:
                others = [c for c in spec.choices if c != values[spec.name]]
                values[spec.name] = others[int(rng.integers(len(others)))]
            else:
                u = ConfigSpaceService.to_unit(spec, values[spec.name]) + rng.normal(0.0, scale)
                values[spec.name] = ConfigSpaceService.from_unit(spec, u)

            repaired: Dict[str, Value] = {}
            for s in space.specs:
                if not ConfigSpaceService.is_active(s, repaired):
                    continue
                repaired[s.name] = values[s.name] if s.name in values else ConfigSpaceService._sample_value(s, rng)
            result.append(Configuration(space_name=space.name, values=repaired))
        return result

    @staticmethod
    def load_space(path: Union[str, Path]) -> ConfigurationSpace:
        path = Path(path)
        try:
            document = yaml.safe_load(path.read_text(encoding="utf-8"))
            return ConfigurationSpace.model_validate(document)
        except (ValidationError, yaml.YAMLError) as e:
            raise ConfigError(f"Invalid configuration space file {path}: {e}") from e

    @staticmethod
    def dump_space(space: ConfigurationSpace, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        document = space.model_dump(mode="json", exclude_none=True)
        path.write_text(yaml.safe_dump(document, sort_keys=False), encoding="utf-8")
        return path

    @staticmethod
    def parse_configuration(
        space: ConfigurationSpace,
        values: Dict[str, Value],
        strict: Optional[bool] = True,
    ) -> Configuration:
        config = Configuration(space_name=space.name, values=values)
        if strict:
            ConfigSpaceService.check(space, config)
        return config
