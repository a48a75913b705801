"""Per-model metric containers and their JSON form."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from cfbench.phantoms import REGIONS, RegionId


def _by_symbol(d: dict[RegionId, float]) -> dict[str, float]:
    return {RegionId.parse(k).symbol: float(v) for k, v in d.items()}


def _from_symbol(d: dict[str, float]) -> dict[RegionId, float]:
    return {RegionId.parse(k): float(v) for k, v in d.items()}


@dataclass
class ModelMetrics:
    composition: dict[int, dict[str, float]] = field(default_factory=dict)
    reversibility: dict[int, float] = field(default_factory=dict)
    realism: float | None = None
    effectiveness: dict[RegionId, float] = field(default_factory=dict)
    minimality: dict[RegionId, dict[RegionId, float]] = field(default_factory=dict)
    generalizability: dict[RegionId, float] = field(default_factory=dict)

    def validate(self) -> None:
        values = [v for row in self.composition.values() for v in row.values()]
        values += list(self.reversibility.values()) + list(self.effectiveness.values())
        values += list(self.generalizability.values())
        values += [v for row in self.minimality.values() for v in row.values()]
        if self.realism is not None:
            values.append(self.realism)
        if not all(math.isfinite(v) for v in values):
            raise ValueError("metric report contains non-finite entries")
        for row in self.composition.values():
            if "ssim" in row and not -1.0 <= row["ssim"] <= 1.0:
                raise ValueError(f"SSIM out of range: {row['ssim']}")
        maes = list(self.effectiveness.values()) + list(self.generalizability.values())
        maes += [v for row in self.minimality.values() for v in row.values()]
        if any(v < 0 for v in maes):
            raise ValueError("negative MAE")
        if self.realism is not None and self.realism < -1e-6:
            raise ValueError(f"negative Fréchet distance {self.realism}")

    def to_json(self) -> dict:
        return {
            "composition": {str(k): dict(v) for k, v in self.composition.items()},
            "reversibility": {str(k): v for k, v in self.reversibility.items()},
            "realism": self.realism,
            "effectiveness": _by_symbol(self.effectiveness),
            "minimality": {RegionId.parse(t).symbol: _by_symbol(row)
                           for t, row in self.minimality.items()},
            "generalizability": _by_symbol(self.generalizability),
        }

    @classmethod
    def from_json(cls, d: dict) -> ModelMetrics:
        return cls(
            composition={int(k): dict(v) for k, v in d.get("composition", {}).items()},
            reversibility={int(k): float(v) for k, v in d.get("reversibility", {}).items()},
            realism=d.get("realism"),
            effectiveness=_from_symbol(d.get("effectiveness", {})),
            minimality={RegionId.parse(t): _from_symbol(row)
                        for t, row in d.get("minimality", {}).items()},
            generalizability=_from_symbol(d.get("generalizability", {})),
        )

    def minimality_matrix(self) -> list[list[float | None]]:
        """Rows: intervened region; columns: measured region (None on the diagonal)."""
        return [[None if r == t else self.minimality.get(t, {}).get(r) for r in REGIONS]
                for t in REGIONS]


@dataclass
class MetricReport:
    models: dict[str, ModelMetrics] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)

    def validate(self) -> None:
        for m in self.models.values():
            m.validate()

    def to_json(self) -> dict:
        return {"models": {k: v.to_json() for k, v in self.models.items()},
                "provenance": self.provenance, "errors": dict(self.errors)}

    @classmethod
    def from_json(cls, d: dict) -> MetricReport:
        return cls({k: ModelMetrics.from_json(v) for k, v in d.get("models", {}).items()},
                   dict(d.get("provenance", {})), dict(d.get("errors", {})))


__all__ = ["MetricReport", "ModelMetrics"]
