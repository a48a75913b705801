"""Parent attributes of the image node: region volumes and interventions on them."""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from cfbench.errors import DegenerateRange
from cfbench.phantoms import REGIONS, RegionId

CLAMP = 1.5


class Space(str, enum.Enum):
    RAW = "raw"
    NORMALIZED = "normalized"


class OutOfRangeWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AttributeVector:
    """Values for all seven regions, in raw voxel counts or normalized units."""

    values: Mapping[RegionId, float]
    space: Space = Space.NORMALIZED
    clamped: bool = field(default=False, compare=False)

    def __post_init__(self):
        vals = {RegionId.parse(k): float(v) for k, v in self.values.items()}
        if set(vals) != set(REGIONS):
            raise ValueError("an AttributeVector must hold all seven regions")
        arr = np.array([vals[r] for r in REGIONS])
        if not np.all(np.isfinite(arr)):
            raise ValueError("attribute values must be finite")
        if self.space is Space.RAW and np.any(arr < 0):
            raise ValueError("raw volumes are non-negative")
        if self.space is Space.NORMALIZED and np.any(np.abs(arr) > CLAMP + 1e-12):
            raise ValueError(f"normalized values must lie in [-{CLAMP}, {CLAMP}]")
        object.__setattr__(self, "values", vals)

    def __getitem__(self, region) -> float:
        return self.values[RegionId.parse(region)]

    def as_array(self) -> np.ndarray:
        return np.array([self.values[r] for r in REGIONS], dtype=np.float64)

    @classmethod
    def from_array(cls, arr, space: Space = Space.NORMALIZED) -> AttributeVector:
        arr = np.asarray(arr, dtype=np.float64).reshape(-1)
        return cls(dict(zip(REGIONS, arr.tolist())), space)

    def to_json(self) -> dict[str, float]:
        return {r.symbol: self.values[r] for r in REGIONS}


@dataclass(frozen=True)
class Normalizer:
    """Per-region min-max map of raw volumes onto [-1, 1]."""

    mins: Mapping[RegionId, float]
    maxs: Mapping[RegionId, float]

    def __post_init__(self):
        for r in REGIONS:
            if not self.maxs[r] > self.mins[r]:
                raise DegenerateRange(f"{r.symbol}: max must exceed min")

    def _bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.array([self.mins[r] for r in REGIONS], dtype=np.float64),
                np.array([self.maxs[r] for r in REGIONS], dtype=np.float64))

    def normalize(self, attrs: AttributeVector) -> AttributeVector:
        if attrs.space is not Space.RAW:
            raise ValueError("normalize expects raw volumes")
        lo, hi = self._bounds()
        z = 2.0 * (attrs.as_array() - lo) / (hi - lo) - 1.0
        out_of_range = bool(np.any(np.abs(z) > CLAMP))
        if out_of_range:
            warnings.warn("normalized volume clamped to the ±1.5 margin", OutOfRangeWarning,
                          stacklevel=2)
        z = np.clip(z, -CLAMP, CLAMP)
        return AttributeVector(dict(zip(REGIONS, z.tolist())), Space.NORMALIZED,
                               clamped=out_of_range)

    def denormalize(self, attrs: AttributeVector) -> AttributeVector:
        if attrs.space is not Space.NORMALIZED:
            raise ValueError("denormalize expects normalized values")
        lo, hi = self._bounds()
        raw = np.maximum(lo + (attrs.as_array() + 1.0) * (hi - lo) / 2.0, 0.0)
        return AttributeVector(dict(zip(REGIONS, raw.tolist())), Space.RAW)

    def normalize_counts(self, counts: Mapping[RegionId, int]) -> np.ndarray:
        """Normalize a raw volume map, clamping silently; returns an array."""
        lo, hi = self._bounds()
        raw = np.array([counts[r] for r in REGIONS], dtype=np.float64)
        return np.clip(2.0 * (raw - lo) / (hi - lo) - 1.0, -CLAMP, CLAMP)

    def to_json(self) -> dict[str, dict[str, float]]:
        return {r.symbol: {"min": float(self.mins[r]), "max": float(self.maxs[r])} for r in REGIONS}

    @classmethod
    def from_json(cls, data: Mapping[str, Mapping[str, float]]) -> Normalizer:
        mins = {RegionId.parse(k): float(v["min"]) for k, v in data.items()}
        maxs = {RegionId.parse(k): float(v["max"]) for k, v in data.items()}
        return cls(mins, maxs)


def fit_normalizer(train_volumes: list[Mapping[RegionId, float]]) -> Normalizer:
    """Fit min/max per region. Callers pass training-split volumes only."""
    if len(train_volumes) < 2:
        raise DegenerateRange("need at least two subjects to fit a normalizer")
    mat = np.array([[float(v[r]) for r in REGIONS] for v in train_volumes])
    lo, hi = mat.min(0), mat.max(0)
    for r, a, b in zip(REGIONS, lo, hi):
        if a == b:
            raise DegenerateRange(f"{r.symbol} has a single value {a} in the training data")
    return Normalizer(dict(zip(REGIONS, lo.tolist())), dict(zip(REGIONS, hi.tolist())))


@dataclass(frozen=True)
class Intervention:
    target: RegionId
    value: float

    def __post_init__(self):
        object.__setattr__(self, "target", RegionId.parse(self.target))
        object.__setattr__(self, "value", float(self.value))


def apply_do(attrs: AttributeVector, iv: Intervention) -> AttributeVector:
    if attrs.space is not Space.NORMALIZED:
        raise ValueError("interventions act on normalized attributes")
    values = dict(attrs.values)
    values[iv.target] = iv.value
    return AttributeVector(values, Space.NORMALIZED)


def sample_intervention(attrs: AttributeVector, target, rng: np.random.Generator) -> Intervention:
    # attrs is unused by the uniform scheme but kept so the sampling rule can
    # depend on the factual state.
    return Intervention(RegionId.parse(target), float(rng.uniform(-1.0, 1.0)))


def fourier_embed(attrs: AttributeVector | np.ndarray, bands: int = 4) -> np.ndarray:
    """Sin/cos features at frequencies 2^k·pi, ordered region-major.

    Layout per region: ``sin(2^0 pi v), cos(2^0 pi v), ..., sin, cos`` for
    ``k = 0..bands-1``; total length ``2 * bands * 7``.
    """
    if bands < 1:
        raise ValueError("bands must be >= 1")
    v = attrs.as_array() if isinstance(attrs, AttributeVector) else np.asarray(attrs, np.float64)
    freqs = (2.0 ** np.arange(bands)) * np.pi
    ang = v[..., :, None] * freqs
    pairs = np.stack([np.sin(ang), np.cos(ang)], axis=-1)
    return pairs.reshape(*v.shape[:-1], 2 * bands * v.shape[-1])
