"""Voxelwise image comparisons: l1 and Gaussian-window 3D SSIM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from cfbench.errors import ShapeMismatch


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return a, b


def l1_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute voxel difference."""
    a, b = _pair(a, b)
    return float(np.abs(a - b).mean())


@dataclass(frozen=True)
class SsimParams:
    sigma: float = 1.5
    radius: int = 3
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def __post_init__(self):
        if self.sigma <= 0 or self.k1 <= 0 or self.k2 <= 0 or self.radius < 1:
            raise ValueError(f"invalid SSIM parameters: {self}")

    @property
    def window(self) -> int:
        return 2 * self.radius + 1

    def kernel1d(self) -> np.ndarray:
        x = np.arange(-self.radius, self.radius + 1, dtype=np.float64)
        w = np.exp(-0.5 * (x / self.sigma) ** 2)
        return w / w.sum()


def ssim_map(a: np.ndarray, b: np.ndarray, p: SsimParams = SsimParams()) -> np.ndarray:
    """Local SSIM at every voxel whose full window lies inside the grid.

    Local statistics are Gaussian-weighted moments (no small-sample
    correction); the separable filter is exact because the 3D window is the
    outer product of normalized 1D kernels.
    """
    a, b = _pair(a, b)
    if min(a.shape) < p.window:
        raise ShapeMismatch(f"volume {a.shape} smaller than the {p.window}-voxel window")
    k = p.kernel1d()

    def filt(v):
        for axis in range(v.ndim):
            v = ndimage.correlate1d(v, k, axis=axis, mode="constant")
        r = p.radius
        return v[tuple(slice(r, n - r) for n in v.shape)]

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a**2
    var_b = filt(b * b) - mu_b**2
    cov = filt(a * b) - mu_a * mu_b
    c1 = (p.k1 * p.data_range) ** 2
    c2 = (p.k2 * p.data_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return num / den


def ssim3d(a: np.ndarray, b: np.ndarray, p: SsimParams = SsimParams()) -> float:
    """Mean local SSIM over the valid interior."""
    return float(ssim_map(a, b, p).mean())
