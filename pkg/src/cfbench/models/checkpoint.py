from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from cfbench.attributes import AttributeVector, Normalizer
from cfbench.models.config import Family, ModelConfig
from cfbench.models.networks import build_network


def weights_hash(module: nn.Module | None, prefix: str | None = None) -> str:
    """SHA-256 over parameter and buffer bytes in sorted-name order."""
    h = hashlib.sha256()
    if module is None:
        return h.hexdigest()
    for name, tensor in sorted(module.state_dict().items()):
        if prefix is not None and not name.startswith(prefix):
            continue
        h.update(name.encode())
        h.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return h.hexdigest()


@dataclass
class ModelCheckpoint:
    config: ModelConfig
    normalizer: Normalizer
    network: nn.Module | None
    train_log: list[dict[str, float]] = field(default_factory=list)

    @property
    def family(self) -> Family:
        return self.config.family

    @property
    def weights_hash(self) -> str:
        return weights_hash(self.network)

    def summary(self) -> dict[str, float]:
        return dict(self.train_log[-1]) if self.train_log else {}

    def save(self, directory: str | os.PathLike) -> Path:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        buf = io.BytesIO()
        if self.network is not None:
            torch.save(self.network.state_dict(), buf)
        (d / "weights.bin").write_bytes(buf.getvalue())
        meta = {
            "model": self.config.to_json(),
            "weights_sha256": self.weights_hash,
            "final_losses": self.summary(),
        }
        (d / "config.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
        (d / "normalizer.json").write_text(json.dumps(self.normalizer.to_json(), indent=2))
        with open(d / "train_log.csv", "w", newline="") as f:
            keys = sorted({k for row in self.train_log for k in row}, key=_log_key_order)
            writer = csv.DictWriter(f, fieldnames=keys)
            writer.writeheader()
            writer.writerows(self.train_log)
        return d

    @classmethod
    def load(cls, directory: str | os.PathLike) -> ModelCheckpoint:
        d = Path(directory)
        meta = json.loads((d / "config.json").read_text())
        cfg = ModelConfig.from_json(meta["model"])
        normalizer = Normalizer.from_json(json.loads((d / "normalizer.json").read_text()))
        network = None
        if cfg.family is not Family.IDENTITY:
            network = build_network(cfg)
            state = torch.load(io.BytesIO((d / "weights.bin").read_bytes()), weights_only=True)
            network.load_state_dict(state)
            network.eval()
        log = []
        with open(d / "train_log.csv", newline="") as f:
            for row in csv.DictReader(f):
                log.append({k: float(v) for k, v in row.items() if v != ""})
        ckpt = cls(cfg, normalizer, network, log)
        if ckpt.weights_hash != meta["weights_sha256"]:
            raise ValueError(f"weights in {d} do not match the recorded hash")
        return ckpt


def _log_key_order(key: str):
    return (key not in ("stage", "epoch"), key)


@dataclass(frozen=True)
class LatentState:
    """Abducted latent for one image plus the factual attributes used."""

    family: Family
    payload: tuple[np.ndarray, ...]
    attrs: AttributeVector

    def __post_init__(self):
        for p in self.payload:
            if not np.all(np.isfinite(p)):
                raise ValueError("latent contains non-finite values")
