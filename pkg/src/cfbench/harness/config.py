"""Benchmark configuration: one JSON document plus dotted-path overrides."""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from cfbench.errors import ConfigError
from cfbench.metrics.image import SsimParams
from cfbench.models.config import ModelConfig

AXES = ("composition", "reversibility", "realism", "effectiveness", "minimality",
        "generalizability")


@dataclass
class DataConfig:
    subjects_a: int = 200
    subjects_b: int = 40
    scans_a: int = 3
    scans_b: int = 1
    resolution: int = 32
    noise_sigma: float = 0.02
    volume_jitter: float = 0.03
    split_ratio: float = 0.9
    seed: int = 0

    def validate(self) -> None:
        if not 0.0 < self.split_ratio < 1.0:
            raise ConfigError(f"split_ratio must lie in (0, 1), got {self.split_ratio}")
        for name in ("subjects_a", "scans_a", "scans_b"):
            if getattr(self, name) < 1:
                raise ConfigError(f"data.{name} must be >= 1")
        if self.subjects_b < 0:
            raise ConfigError("data.subjects_b must be >= 0")
        if self.noise_sigma < 0:
            raise ConfigError("data.noise_sigma must be >= 0")


@dataclass
class MetricSettings:
    passes: tuple[int, ...] = (1, 10)
    cycles: tuple[int, ...] = (1, 3)
    ssim: SsimParams = field(default_factory=SsimParams)
    feature_dim: int = 64
    feature_seed: int = 1234
    seed: int = 0
    remeasure_nontarget: bool = False
    axes: tuple[str, ...] = AXES

    def validate(self) -> None:
        if not self.passes or min(self.passes) < 1 or not self.cycles or min(self.cycles) < 1:
            raise ConfigError("passes and cycles must be positive")
        bad = set(self.axes) - set(AXES)
        if bad:
            raise ConfigError(f"unknown metric axes: {sorted(bad)}")
        if self.feature_dim < 8 or self.feature_dim % 8:
            raise ConfigError("feature_dim must be a positive multiple of 8")


@dataclass
class ModelEntry:
    """A named model to benchmark; ``untrained`` keeps the seeded initial weights."""

    name: str
    model: ModelConfig
    untrained: bool = False


@dataclass
class BenchmarkConfig:
    data: DataConfig = field(default_factory=DataConfig)
    models: list[ModelEntry] = field(default_factory=list)
    metrics: MetricSettings = field(default_factory=MetricSettings)
    output_dir: str = "runs/default"

    def validate(self) -> None:
        self.data.validate()
        self.metrics.validate()
        names = [m.name for m in self.models]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate model names: {names}")
        for m in self.models:
            if m.model.resolution != self.data.resolution:
                raise ConfigError(f"model {m.name} resolution {m.model.resolution} "
                                  f"!= data resolution {self.data.resolution}")

    def entry(self, name: str) -> ModelEntry:
        for m in self.models:
            if m.name == name:
                return m
        raise ConfigError(f"no model named {name!r}; have {[m.name for m in self.models]}")

    def to_json(self) -> dict[str, Any]:
        return {
            "data": vars(self.data).copy(),
            "models": [{"name": m.name, "untrained": m.untrained, "model": m.model.to_json()}
                       for m in self.models],
            "metrics": {**{k: v for k, v in vars(self.metrics).items() if k != "ssim"},
                        "passes": list(self.metrics.passes), "cycles": list(self.metrics.cycles),
                        "axes": list(self.metrics.axes), "ssim": vars(self.metrics.ssim).copy()},
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_json(cls, d: dict[str, Any]) -> BenchmarkConfig:
        _no_extra(d, {"data", "models", "metrics", "output_dir"}, "config")
        try:
            data = DataConfig(**d.get("data", {}))
            m = dict(d.get("metrics", {}))
            ssim = SsimParams(**m.pop("ssim", {}))
            for key in ("passes", "cycles", "axes"):
                if key in m:
                    m[key] = tuple(m[key])
            metrics = MetricSettings(ssim=ssim, **m)
            models = []
            for entry in d.get("models", []):
                _no_extra(entry, {"name", "model", "untrained"}, "model entry")
                cfg = ModelConfig.from_json({"resolution": data.resolution, **entry["model"]})
                models.append(ModelEntry(entry.get("name", cfg.family.value), cfg,
                                         bool(entry.get("untrained", False))))
        except (TypeError, ValueError, KeyError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc
        cfg = cls(data, models, metrics, d.get("output_dir", "runs/default"))
        cfg.validate()
        return cfg

    def hash(self) -> str:
        """Content hash of everything except the output location."""
        body = self.to_json()
        body.pop("output_dir")
        return hashlib.sha256(canonical(body).encode()).hexdigest()


def _no_extra(d: dict, allowed: set[str], what: str) -> None:
    extra = set(d) - allowed
    if extra:
        raise ConfigError(f"unknown {what} keys: {sorted(extra)}")


def canonical(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(doc: dict[str, Any], overrides: Sequence[str]) -> dict[str, Any]:
    """Apply ``a.b.c=value`` overrides; list elements are addressed by index or model name."""
    doc = copy.deepcopy(doc)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        path, raw = item.split("=", 1)
        keys = path.strip().split(".")
        node: Any = doc
        for i, key in enumerate(keys[:-1]):
            node = _step(node, key, path, create=True)
        last = keys[-1]
        if isinstance(node, list):
            node[_index(node, last, path)] = _parse_value(raw)
        elif isinstance(node, dict):
            node[last] = _parse_value(raw)
        else:
            raise ConfigError(f"cannot set {path!r}")
    return doc


def _index(node: list, key: str, path: str) -> int:
    if key.isdigit() and int(key) < len(node):
        return int(key)
    for i, el in enumerate(node):
        if isinstance(el, dict) and el.get("name") == key:
            return i
    raise ConfigError(f"no list element {key!r} in override {path!r}")


def _step(node: Any, key: str, path: str, create: bool) -> Any:
    if isinstance(node, list):
        return node[_index(node, key, path)]
    if isinstance(node, dict):
        if key not in node:
            if not create:
                raise ConfigError(f"unknown key {key!r} in {path!r}")
            node[key] = {}
        return node[key]
    raise ConfigError(f"cannot descend into {key!r} in {path!r}")


def load_config(path: str | os.PathLike, overrides: Sequence[str] = ()) -> BenchmarkConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return BenchmarkConfig.from_json(apply_overrides(doc, overrides))
