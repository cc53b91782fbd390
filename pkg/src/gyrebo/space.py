"""Mixed categorical/integer/float hyperparameter space.

A SearchSpace is an ordered list of dimensions. Configurations are plain
dicts mapping dimension name -> value. Numeric encoding maps every
dimension into [0, 1] so that a tree surrogate can consume configurations
as fixed-length real vectors.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

ACTIVATIONS = (
    "relu", "leaky_relu", "prelu", "relu6", "elu", "selu", "silu", "gelu",
    "sigmoid", "logsigmoid", "softplus", "softshrink", "softsign", "tanh",
    "tanhshrink", "threshold", "hardtanh", "identity", "squareplus",
)

OPTIMIZERS = ("Adadelta", "Adagrad", "Adam", "AdamW", "RMSprop", "SGD")

PADDING_TYPES = ("constant", "reflect", "replicate", "circular")


class SpaceError(ValueError):
    """Invalid dimension, configuration, or encoding request."""


@dataclass(frozen=True)
class Categorical:
    name: str
    choices: tuple

    def __post_init__(self):
        if len(self.choices) == 0:
            raise SpaceError(f"categorical '{self.name}' has no choices")

    def contains(self, value) -> bool:
        return value in self.choices

    def encode(self, value) -> float:
        idx = self.choices.index(value)
        if len(self.choices) == 1:
            return 0.0
        return idx / (len(self.choices) - 1)

    def decode(self, coord: float):
        idx = int(round(coord * (len(self.choices) - 1)))
        return self.choices[min(max(idx, 0), len(self.choices) - 1)]

    def sample(self, rng: np.random.Generator):
        return self.choices[int(rng.integers(len(self.choices)))]


@dataclass(frozen=True)
class Integer:
    name: str
    lo: int
    hi: int  # inclusive

    def __post_init__(self):
        if self.lo >= self.hi:
            raise SpaceError(f"integer '{self.name}': lo must be < hi")

    def contains(self, value) -> bool:
        return isinstance(value, (int, np.integer)) and self.lo <= value <= self.hi

    def encode(self, value) -> float:
        return (int(value) - self.lo) / (self.hi - self.lo)

    def decode(self, coord: float) -> int:
        v = int(round(self.lo + coord * (self.hi - self.lo)))
        return min(max(v, self.lo), self.hi)

    def sample(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.lo, self.hi + 1))


@dataclass(frozen=True)
class Float:
    name: str
    lo: float
    hi: float
    scale: str = "linear"  # or "log"

    def __post_init__(self):
        if self.lo >= self.hi:
            raise SpaceError(f"float '{self.name}': lo must be < hi")
        if self.scale not in ("linear", "log"):
            raise SpaceError(f"float '{self.name}': bad scale {self.scale!r}")
        if self.scale == "log" and self.lo <= 0:
            raise SpaceError(f"float '{self.name}': log scale needs lo > 0")

    def contains(self, value) -> bool:
        return isinstance(value, (int, float, np.floating)) and self.lo <= value <= self.hi

    def encode(self, value) -> float:
        if self.scale == "log":
            return (math.log10(value) - math.log10(self.lo)) / (
                math.log10(self.hi) - math.log10(self.lo))
        return (value - self.lo) / (self.hi - self.lo)

    def decode(self, coord: float) -> float:
        coord = min(max(coord, 0.0), 1.0)
        if self.scale == "log":
            return 10.0 ** (math.log10(self.lo)
                            + coord * (math.log10(self.hi) - math.log10(self.lo)))
        return self.lo + coord * (self.hi - self.lo)

    def sample(self, rng: np.random.Generator) -> float:
        return self.decode(float(rng.uniform()))


Dimension = Categorical | Integer | Float


@dataclass
class SearchSpace:
    dimensions: list[Dimension] = field(default_factory=list)

    def __post_init__(self):
        names = [d.name for d in self.dimensions]
        if len(set(names)) != len(names):
            raise SpaceError("dimension names must be unique")
        self._by_name = {d.name: d for d in self.dimensions}

    @property
    def names(self) -> list[str]:
        return [d.name for d in self.dimensions]

    def __len__(self) -> int:
        return len(self.dimensions)

    def lookup(self, name: str) -> Dimension:
        try:
            return self._by_name[name]
        except KeyError:
            raise SpaceError(f"unknown dimension {name!r}") from None

    def validate(self, config: dict) -> None:
        if set(config) != set(self._by_name):
            missing = set(self._by_name) - set(config)
            extra = set(config) - set(self._by_name)
            raise SpaceError(f"config keys mismatch: missing={sorted(missing)} "
                             f"extra={sorted(extra)}")
        for dim in self.dimensions:
            if not dim.contains(config[dim.name]):
                raise SpaceError(
                    f"value {config[dim.name]!r} out of range for '{dim.name}'")

    def sample(self, rng: np.random.Generator) -> dict:
        return {d.name: d.sample(rng) for d in self.dimensions}

    def encode(self, config: dict) -> np.ndarray:
        for name in config:
            if name not in self._by_name:
                raise SpaceError(f"unknown dimension {name!r}")
        return np.array([d.encode(config[d.name]) for d in self.dimensions],
                        dtype=np.float64)

    def decode(self, vector: Sequence[float]) -> dict:
        if len(vector) != len(self.dimensions):
            raise SpaceError("vector length does not match dimension count")
        return {d.name: d.decode(float(v)) for d, v in zip(self.dimensions, vector)}

    # JSON config-file format: a list of {name, kind, ...} objects.
    def to_json_obj(self) -> list[dict]:
        out = []
        for d in self.dimensions:
            if isinstance(d, Categorical):
                out.append({"name": d.name, "kind": "categorical",
                            "choices": list(d.choices)})
            elif isinstance(d, Integer):
                out.append({"name": d.name, "kind": "integer",
                            "lo": d.lo, "hi": d.hi})
            else:
                out.append({"name": d.name, "kind": "float",
                            "lo": d.lo, "hi": d.hi, "scale": d.scale})
        return out

    @classmethod
    def from_json_obj(cls, obj: list[dict]) -> "SearchSpace":
        dims: list[Dimension] = []
        for spec in obj:
            kind = spec.get("kind")
            if kind == "categorical":
                dims.append(Categorical(spec["name"], tuple(spec["choices"])))
            elif kind == "integer":
                dims.append(Integer(spec["name"], int(spec["lo"]), int(spec["hi"])))
            elif kind == "float":
                dims.append(Float(spec["name"], float(spec["lo"]),
                                  float(spec["hi"]), spec.get("scale", "linear")))
            else:
                raise SpaceError(f"unknown dimension kind {kind!r}")
        return cls(dims)

    def dumps(self) -> str:
        return json.dumps(self.to_json_obj(), indent=2)

    @classmethod
    def loads(cls, text: str) -> "SearchSpace":
        return cls.from_json_obj(json.loads(text))


def default_space() -> SearchSpace:
    """The full mixed hyperparameter space covered by the search."""
    return SearchSpace([
        Categorical("padding", (True, False)),
        Categorical("padding_type", PADDING_TYPES),
        Categorical("coord_feat", (True, False)),
        Categorical("lift_act", ACTIVATIONS),
        Integer("num_FNO", 2, 16),
        Integer("num_latent_feat", 2, 64),
        Integer("num_modes", 2, 32),
        Integer("num_proj_layers", 2, 16),
        Integer("proj_size", 2, 16),
        Categorical("proj_act", ACTIVATIONS),
        Float("alpha", 0.0, 1.0, "linear"),
        Categorical("optimizer", OPTIMIZERS),
        Float("lr", 1e-6, 1e-2, "log"),
        Float("weight_decay", 0.0, 0.1, "linear"),
        Integer("batch_size", 2, 64),
    ])


def sample_random(space: SearchSpace, rng: np.random.Generator) -> dict:
    """Uniform config draw (log-uniform on log-scaled floats)."""
    return space.sample(rng)
