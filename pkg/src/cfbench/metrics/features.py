"""Fixed random-weight 3D conv embedding used for Fréchet distances."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

from cfbench.errors import ShapeMismatch


class FeatureExtractor:
    """Four stride-2 conv blocks, global average pool, ``dim`` outputs.

    Weights are drawn once from ``seed`` and never trained. Inputs in [0, 1]
    are mapped to [-1, 1] first.
    """

    def __init__(self, resolution: int = 32, dim: int = 64, seed: int = 1234):
        self.resolution = resolution
        self.dim = dim
        self.seed = seed
        chans = [1, dim // 8, dim // 4, dim // 2, dim]
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            layers = []
            for cin, cout in zip(chans[:-1], chans[1:]):
                layers += [nn.Conv3d(cin, cout, 4, 2, 1), nn.LeakyReLU(0.2)]
            self.net = nn.Sequential(*layers, nn.AdaptiveAvgPool3d(1), nn.Flatten())
        self.net.eval()
        for p in self.net.parameters():
            p.requires_grad_(False)

    def __call__(self, vols) -> np.ndarray:
        return extract_features_batch(self, vols)


def extract_features_batch(fx: FeatureExtractor, vols, batch: int = 32) -> np.ndarray:
    out = []
    for i in range(0, len(vols), batch):
        chunk = []
        for v in vols[i:i + batch]:
            if np.shape(v) != (fx.resolution,) * 3:
                raise ShapeMismatch(f"expected {(fx.resolution,) * 3}, got {np.shape(v)}")
            chunk.append(np.asarray(v, dtype=np.float32))
        x = torch.from_numpy(np.stack(chunk))[:, None] * 2.0 - 1.0
        with torch.no_grad():
            out.append(fx.net(x).double().numpy())
    return np.concatenate(out) if out else np.zeros((0, fx.dim))


def extract_features(fx: FeatureExtractor, vol: np.ndarray) -> np.ndarray:
    return extract_features_batch(fx, [vol])[0]
