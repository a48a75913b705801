"""Fréchet distance between Gaussian fits of two feature sets."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from cfbench.errors import InsufficientSamples, NumericalStabilityError

NEGATIVE_TOLERANCE = 1e-10


def _clip_spectrum(w: np.ndarray) -> np.ndarray:
    # roundoff scales with the largest eigenvalue, so the tolerance does too
    tol = NEGATIVE_TOLERANCE * max(1.0, float(np.max(np.abs(w), initial=0.0)))
    if np.any(w < -tol):
        raise NumericalStabilityError(
            f"matrix is not positive semi-definite: smallest eigenvalue {w.min():.3e}")
    return np.clip(w, 0.0, None)


def sqrtm_psd(mat: np.ndarray) -> np.ndarray:
    """Symmetric square root of a symmetric positive semi-definite matrix."""
    mat = np.asarray(mat, dtype=np.float64)
    w, v = np.linalg.eigh((mat + mat.T) / 2)
    return (v * np.sqrt(_clip_spectrum(w))) @ v.T


def _trace_sqrt_product(sa: np.ndarray, sb: np.ndarray) -> float:
    """Tr (Sa Sb)^{1/2} via the symmetric form Sa^{1/2} Sb Sa^{1/2}."""
    ra = sqrtm_psd(sa)
    m = ra @ sb @ ra
    w = np.linalg.eigvalsh((m + m.T) / 2)
    return float(np.sqrt(_clip_spectrum(w)).sum())


def gaussian_fit(feats: Sequence[np.ndarray] | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(feats, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) < 2:
        raise InsufficientSamples(f"need at least 2 feature vectors, got {len(x)}")
    return x.mean(axis=0), np.atleast_2d(np.cov(x, rowvar=False))


def frechet_from_moments(mu_a, cov_a, mu_b, cov_b) -> float:
    diff = np.asarray(mu_a) - np.asarray(mu_b)
    tr = np.trace(cov_a) + np.trace(cov_b) - 2.0 * _trace_sqrt_product(cov_a, cov_b)
    return max(0.0, float(diff @ diff + tr))


def frechet_distance(feats_a, feats_b) -> float:
    """Squared Fréchet distance between Gaussians fitted to two sample sets."""
    mu_a, cov_a = gaussian_fit(feats_a)
    mu_b, cov_b = gaussian_fit(feats_b)
    if mu_a.shape != mu_b.shape:
        raise ValueError(f"feature dims differ: {mu_a.shape} vs {mu_b.shape}")
    return frechet_from_moments(mu_a, cov_a, mu_b, cov_b)
