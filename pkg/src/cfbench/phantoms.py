"""Labeled synthetic brain phantoms and the oracle segmenter.

A phantom is a brain ellipsoid filled with a tissue intensity, into which seven
region ellipsoids are painted at fixed canonical positions. Region sizes are
drawn per subject from cohort-specific distributions, so every phantom comes
with exact ground-truth region volumes.

Volumes are ``float32`` arrays of shape ``dims`` with values in ``[0, 1]``;
label maps are ``uint8`` arrays of the same shape with codes ``0..8``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np

from cfbench.errors import RegionOverflow, ShapeMismatch

REFERENCE_DIM = 32
BACKGROUND = 0
TISSUE = 8


class RegionId(enum.IntEnum):
    """The seven intervenable regions; the value is the label code."""

    FRO = 1
    PAR = 2
    TEM = 3
    OCC = 4
    CIN = 5
    INS = 6
    VEN = 7

    @property
    def symbol(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, name: str | int | RegionId) -> RegionId:
        if isinstance(name, cls):
            return name
        if isinstance(name, (int, np.integer)):
            return cls(int(name))
        try:
            return cls[str(name).upper()]
        except KeyError:
            raise ValueError(f"unknown region {name!r}") from None


REGIONS: tuple[RegionId, ...] = tuple(RegionId)

# Paint order is label order (Fro first, Ven last); later regions win overlaps.
PROTOTYPES = np.array(
    [0.00, 0.55, 0.62, 0.69, 0.76, 0.83, 0.90, 0.10, 0.45],
    dtype=np.float32,
)


class CohortId(str, enum.Enum):
    A = "A"
    B = "B"


@dataclass(frozen=True)
class CohortParams:
    brain_scale: tuple[float, float]
    region_scale: tuple[float, float]
    ven_scale: tuple[float, float]
    center_jitter: float
    aspect_jitter: float


# Cohort A is the older, larger-ventricle population used for training.
COHORTS: dict[CohortId, CohortParams] = {
    CohortId.A: CohortParams(
        brain_scale=(0.97, 1.03),
        region_scale=(0.75, 1.25),
        ven_scale=(0.95, 1.45),
        center_jitter=0.02,
        aspect_jitter=0.06,
    ),
    CohortId.B: CohortParams(
        brain_scale=(0.93, 0.99),
        region_scale=(0.80, 1.25),
        ven_scale=(0.60, 1.05),
        center_jitter=0.04,
        aspect_jitter=0.08,
    ),
}

# Brain semi-axes (x: left-right, y: posterior-anterior, z: inferior-superior)
# in voxels at the reference grid.
BRAIN_SEMI_AXES = (12.0, 14.0, 12.0)

# Canonical region centers as fractions of the brain semi-axes, and base
# semi-axes in reference voxels.
CANONICAL_GEOMETRY: dict[RegionId, tuple[tuple[float, float, float], tuple[float, float, float]]] = {
    RegionId.FRO: ((0.0, 0.55, 0.15), (4.0, 2.6, 3.0)),
    RegionId.PAR: ((0.0, -0.40, 0.55), (4.0, 2.8, 2.2)),
    RegionId.TEM: ((-0.55, 0.10, -0.35), (2.2, 3.6, 2.4)),
    RegionId.OCC: ((0.0, -0.65, -0.05), (3.6, 2.2, 3.0)),
    RegionId.CIN: ((0.0, 0.10, 0.48), (2.2, 3.8, 1.8)),
    RegionId.INS: ((0.55, 0.05, 0.0), (2.2, 3.2, 3.0)),
    RegionId.VEN: ((0.0, -0.05, 0.0), (2.6, 3.6, 2.2)),
}


@dataclass(frozen=True)
class RegionParams:
    center: tuple[float, float, float]
    semi_axes: tuple[float, float, float]

    def __post_init__(self):
        if min(self.semi_axes) <= 0:
            raise ValueError("semi-axes must be positive")


@dataclass(frozen=True)
class SubjectSpec:
    subject_id: str
    cohort: CohortId
    region_params: dict[RegionId, RegionParams]
    brain_semi_axes: tuple[float, float, float]
    noise_seed: int
    noise_sigma: float = 0.02


def _unit_sphere(n: int = 400) -> np.ndarray:
    i = np.arange(n) + 0.5
    phi = np.arccos(1 - 2 * i / n)
    theta = np.pi * (1 + 5 ** 0.5) * i
    return np.stack([np.cos(theta) * np.sin(phi), np.sin(theta) * np.sin(phi), np.cos(phi)], 1)


_SPHERE = _unit_sphere()


def fits_in_brain(brain_semi_axes, rp: RegionParams, margin: float = 0.97) -> bool:
    """Continuous containment of a region ellipsoid, checked on its surface."""
    brain = np.asarray(brain_semi_axes)
    pts = np.asarray(rp.center) * brain + _SPHERE * np.asarray(rp.semi_axes)
    return bool(np.all(((pts / brain) ** 2).sum(1) <= margin))


def sample_subject(cohort: CohortId | str, rng_seed: int, subject_id: str | None = None,
                   noise_sigma: float = 0.02) -> SubjectSpec:
    """Draw one subject's anatomy from the cohort's parameter distributions.

    Draws whose regions would leave the brain are rejected and redrawn from the
    same stream, so the result is still a pure function of the seed.
    """
    cohort = CohortId(cohort)
    p = COHORTS[cohort]
    rng = np.random.default_rng([rng_seed, 0 if cohort is CohortId.A else 1])
    while True:
        brain = tuple(float(a * rng.uniform(*p.brain_scale)) for a in BRAIN_SEMI_AXES)
        params = {}
        for region in REGIONS:
            center, base = CANONICAL_GEOMETRY[region]
            lo, hi = p.ven_scale if region is RegionId.VEN else p.region_scale
            scale = rng.uniform(lo, hi)
            aspect = rng.uniform(1 - p.aspect_jitter, 1 + p.aspect_jitter, size=3)
            offset = np.clip(rng.normal(0.0, p.center_jitter, size=3), -2.5 * p.center_jitter,
                             2.5 * p.center_jitter)
            params[region] = RegionParams(
                center=tuple(float(c + o) for c, o in zip(center, offset)),
                semi_axes=tuple(float(b * scale * a) for b, a in zip(base, aspect)),
            )
        if all(fits_in_brain(brain, rp) for rp in params.values()):
            break
    return SubjectSpec(
        subject_id=subject_id or f"{cohort.value}{rng_seed:06d}",
        cohort=cohort,
        region_params=params,
        brain_semi_axes=brain,
        noise_seed=int(rng.integers(2**31)),
        noise_sigma=noise_sigma,
    )


def scan_of(spec: SubjectSpec, scan_index: int, volume_jitter: float = 0.03) -> SubjectSpec:
    """Longitudinal scan ``scan_index`` of a subject.

    Geometry is shared with the subject; each region's volume is perturbed by at
    most ``volume_jitter`` (relative) and the noise realization changes.
    """
    if scan_index == 0:
        return spec
    rng = np.random.default_rng([spec.noise_seed, scan_index])
    params = {}
    for region, rp in spec.region_params.items():
        s = (1.0 + rng.uniform(-volume_jitter, volume_jitter)) ** (1.0 / 3.0)
        params[region] = replace(rp, semi_axes=tuple(a * s for a in rp.semi_axes))
    return replace(spec, region_params=params, noise_seed=int(rng.integers(2**31)))


def _grid(dims: tuple[int, int, int]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    axes = [np.arange(d, dtype=np.float64) - (d - 1) / 2.0 for d in dims]
    return np.meshgrid(*axes, indexing="ij")


def _ellipsoid(grid, center, semi_axes) -> np.ndarray:
    acc = np.zeros(grid[0].shape)
    for g, c, a in zip(grid, center, semi_axes):
        acc += ((g - c) / a) ** 2
    return acc <= 1.0


def paint_labels(spec: SubjectSpec, dims: tuple[int, int, int]) -> np.ndarray:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or min(dims) < 16:
        raise ShapeMismatch(f"dims must be three axes of at least 16 voxels, got {dims}")
    scale = [d / REFERENCE_DIM for d in dims]
    grid = _grid(dims)
    brain_axes = [a * s for a, s in zip(spec.brain_semi_axes, scale)]
    brain = _ellipsoid(grid, (0.0, 0.0, 0.0), brain_axes)
    labels = np.where(brain, TISSUE, BACKGROUND).astype(np.uint8)
    for region in REGIONS:
        rp = spec.region_params[region]
        center = [c * a for c, a in zip(rp.center, brain_axes)]
        axes = [a * s for a, s in zip(rp.semi_axes, scale)]
        mask = _ellipsoid(grid, center, axes)
        if np.any(mask & ~brain):
            raise RegionOverflow(f"{region.symbol} of {spec.subject_id} exits the brain mask")
        labels[mask] = int(region)
    return labels


def render_phantom(spec: SubjectSpec, dims: tuple[int, int, int] = (32, 32, 32),
                   noise_sigma: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Render ``(volume, labels)``; labels are the exact pre-noise painting."""
    labels = paint_labels(spec, dims)
    vol = PROTOTYPES[labels]
    sigma = spec.noise_sigma if noise_sigma is None else noise_sigma
    if sigma > 0:
        rng = np.random.default_rng(spec.noise_seed)
        noise = rng.normal(0.0, sigma, size=labels.shape)
        vol = np.clip(vol + noise, 0.0, 1.0).astype(np.float32)
    return vol, labels


# Neighbours further than this from the current estimate are treated as another
# structure. Must stay below the smallest prototype gap (0.07) so noiseless
# edges are never averaged across.
_SIMILARITY = 0.05


def edge_preserving_mean(vol: np.ndarray, tolerance: float = _SIMILARITY,
                         iterations: int = 2) -> np.ndarray:
    """3x3x3 mean restricted to neighbours of similar intensity.

    Each iteration re-anchors the similarity test on the previous estimate
    (starting from the raw voxel), which removes most of the pull toward a
    noisy centre value. The grid border is replicated.
    """
    raw = np.asarray(vol, dtype=np.float64)
    padded = np.pad(raw, 1, mode="edge")
    nx, ny, nz = raw.shape
    est = raw
    for _ in range(iterations):
        total = np.zeros_like(raw)
        count = np.zeros_like(raw)
        for dx in range(3):
            for dy in range(3):
                for dz in range(3):
                    nb = padded[dx:dx + nx, dy:dy + ny, dz:dz + nz]
                    near = np.abs(nb - est) <= tolerance
                    total += np.where(near, nb, 0.0)
                    count += near
        est = np.where(count > 0, total / np.maximum(count, 1), raw)
    return est


def nearest_prototype(vol: np.ndarray) -> np.ndarray:
    d = np.abs(np.asarray(vol, dtype=np.float64)[..., None] - PROTOTYPES.astype(np.float64))
    return np.argmin(d, axis=-1).astype(np.uint8)


def _walk(padded: np.ndarray, start: np.ndarray, axis: int, sign: int, pad: int,
          steps: int, tau: float) -> np.ndarray:
    """Follow a ramp along ``axis`` until the step falls below ``tau``."""
    cur = start.copy()
    done = np.zeros(start.shape, dtype=bool)
    for k in range(1, steps + 1):
        idx = [slice(pad, pad + n) for n in start.shape]
        idx[axis] = slice(pad + sign * k, pad + sign * k + start.shape[axis])
        v = padded[tuple(idx)]
        done |= np.abs(v - cur) < tau
        cur = np.where(done, cur, v)
    return cur


def resolve_ramps(smooth: np.ndarray, labels: np.ndarray, tau: float = 0.03,
                  reach: int = 3) -> np.ndarray:
    """Relabel partial-volume voxels sitting inside a monotone intensity ramp.

    Nearest-prototype labelling turns a blurred edge between two classes into
    a shell of whatever classes have intermediate intensities (a soft brain
    boundary becomes ventricle, for instance). A voxel strictly inside a ramp
    along some axis is assigned to the nearer of the two plateau classes found
    at the ramp ends, split at their midpoint. Voxels within 0.015 of a prototype
    are left alone, so sharp renders keep their labels.
    """
    protos = PROTOTYPES.astype(np.float64)
    out = labels.copy()
    best = np.zeros(smooth.shape)
    pad = reach + 1
    padded = np.pad(smooth, pad, mode="edge")
    on_proto = np.abs(smooth - protos[labels]) < 0.015
    for axis in range(3):
        prev = _walk(padded, smooth, axis, -1, pad, 1, -np.inf)
        nxt = _walk(padded, smooth, axis, 1, pad, 1, -np.inf)
        rising = (prev < smooth - tau) & (smooth < nxt - tau)
        falling = (prev > smooth + tau) & (smooth > nxt + tau)
        steep = np.abs(nxt - prev)
        sel = (rising | falling) & ~on_proto & (steep > best)
        if not sel.any():
            continue
        ca = nearest_prototype(_walk(padded, smooth, axis, -1, pad, reach, tau))
        cb = nearest_prototype(_walk(padded, smooth, axis, 1, pad, reach, tau))
        lo = np.where(protos[ca] <= protos[cb], ca, cb)
        hi = np.where(protos[ca] <= protos[cb], cb, ca)
        pick = np.where(smooth < (protos[lo] + protos[hi]) / 2, lo, hi)
        out[sel] = pick[sel]
        best = np.where(sel, steep, best)
    return out


def oracle_segment(vol: np.ndarray) -> np.ndarray:
    """Label a rendered (or generated) volume by nearest intensity prototype.

    Denoise, label each voxel by its nearest prototype, then resolve
    partial-volume voxels on blurred edges (see :func:`resolve_ramps`).
    """
    vol = np.asarray(vol)
    if vol.ndim != 3:
        raise ShapeMismatch(f"expected a 3D volume, got shape {vol.shape}")
    smooth = edge_preserving_mean(vol)
    return resolve_ramps(smooth, nearest_prototype(smooth))


def region_volumes(labels: np.ndarray) -> dict[RegionId, int]:
    counts = np.bincount(np.asarray(labels, dtype=np.int64).ravel(), minlength=9)
    return {r: int(counts[int(r)]) for r in REGIONS}


def dice(a: np.ndarray, b: np.ndarray, label: int) -> float:
    ma, mb = a == label, b == label
    denom = ma.sum() + mb.sum()
    if denom == 0:
        return 1.0
    return float(2.0 * np.logical_and(ma, mb).sum() / denom)

