"""Abduction, action, prediction: single counterfactuals and multi-pass chains."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from cfbench import models
from cfbench.attributes import (
    AttributeVector,
    Intervention,
    Space,
    apply_do,
    sample_intervention,
)
from cfbench.errors import ShapeMismatch
from cfbench.models import ModelCheckpoint
from cfbench.phantoms import RegionId, oracle_segment, region_volumes


@dataclass(frozen=True)
class CounterfactualRequest:
    checkpoint: ModelCheckpoint
    volume: np.ndarray
    attrs: AttributeVector
    intervention: Intervention | None = None

    def __post_init__(self):
        expected = (self.checkpoint.config.resolution,) * 3
        if np.shape(self.volume) != expected:
            raise ShapeMismatch(f"volume shape {np.shape(self.volume)} does not match {expected}")


def counterfactual(req: CounterfactualRequest) -> np.ndarray:
    """Encode under the factual attributes, decode under the intervened ones."""
    z = models.encode(req.checkpoint, req.volume, req.attrs)
    target = req.attrs if req.intervention is None else apply_do(req.attrs, req.intervention)
    return models.decode(req.checkpoint, z, target)


def null_pass_chain(ckpt: ModelCheckpoint, vol: np.ndarray, attrs: AttributeVector,
                    k: int) -> list[np.ndarray]:
    """``k`` consecutive null-intervention passes, re-encoding each output."""
    if k < 1:
        raise ValueError("k must be at least 1")
    out, cur = [], vol
    for _ in range(k):
        cur = counterfactual(CounterfactualRequest(ckpt, cur, attrs))
        out.append(cur)
    return out


@dataclass
class CycleTrace:
    """Forward/reverse passes of a reversibility chain, in order."""

    steps: list[tuple[Intervention, np.ndarray]] = field(default_factory=list)
    seed: int | None = None
    subject_id: str = ""

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def final(self) -> np.ndarray:
        return self.steps[-1][1]

    def after_cycles(self, n: int) -> np.ndarray:
        """Image at the end of cycle ``n`` (1-based)."""
        return self.steps[2 * n - 1][1]

    def save(self, directory: str | os.PathLike) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        meta = {"seed": self.seed, "subject_id": self.subject_id, "steps": []}
        for i, (iv, vol) in enumerate(self.steps):
            name = f"step_{i:03d}.f32"
            np.ascontiguousarray(vol, dtype="<f4").tofile(d / name)
            meta["steps"].append({"target": iv.target.symbol, "value": iv.value,
                                  "file": name, "shape": list(vol.shape)})
        (d / "meta.json").write_text(json.dumps(meta, indent=2))
        return d

    @classmethod
    def load(cls, directory: str | os.PathLike) -> CycleTrace:
        d = Path(directory)
        meta = json.loads((d / "meta.json").read_text())
        steps = []
        for s in meta["steps"]:
            vol = np.fromfile(d / s["file"], dtype="<f4").reshape(s["shape"])
            steps.append((Intervention(RegionId.parse(s["target"]), float(s["value"])), vol))
        return cls(steps, meta["seed"], meta["subject_id"])


def _remeasure(ckpt: ModelCheckpoint, vol: np.ndarray, keep: AttributeVector,
               target: RegionId) -> AttributeVector:
    counts = region_volumes(oracle_segment(vol))
    arr = ckpt.normalizer.normalize_counts(counts)
    arr[list(RegionId).index(target)] = keep[target]
    return AttributeVector.from_array(arr, Space.NORMALIZED)


def reversibility_chain(ckpt: ModelCheckpoint, vol: np.ndarray, attrs: AttributeVector,
                        target: RegionId, cycles: int, rng: np.random.Generator,
                        remeasure: bool = False, seed: int | None = None) -> CycleTrace:
    """Repeatedly push ``target`` to a random value and back.

    Each pass re-encodes the current image. Non-target attributes stay at their
    factual values unless ``remeasure`` is set, in which case the abduction of
    the reverse pass uses attributes measured on the intermediate image. The
    reverse pass always decodes under the factual attributes.
    """
    if cycles < 1:
        raise ValueError("cycles must be at least 1")
    target = RegionId.parse(target)
    back = Intervention(target, attrs[target])
    trace = CycleTrace(seed=seed)
    cur = vol
    for _ in range(cycles):
        fwd = sample_intervention(attrs, target, rng)
        mid = counterfactual(CounterfactualRequest(ckpt, cur, attrs, fwd))
        trace.steps.append((fwd, mid))
        mid_attrs = apply_do(attrs, fwd)
        if remeasure:
            mid_attrs = _remeasure(ckpt, mid, mid_attrs, target)
        # apply_do(mid_attrs, back) == attrs when non-targets are held factual
        cur = models.decode(ckpt, models.encode(ckpt, mid, mid_attrs), attrs)
        trace.steps.append((back, cur))
    return trace
