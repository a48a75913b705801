"""Phantom dataset materialization, on-disk scan records and subject-level splits."""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from cfbench.attributes import AttributeVector, Normalizer, fit_normalizer
from cfbench.errors import ConfigError, TooFewSubjects
from cfbench.harness.config import DataConfig
from cfbench.metrics.scores import EvalItem
from cfbench.phantoms import (
    REGIONS,
    CohortId,
    RegionId,
    region_volumes,
    render_phantom,
    sample_subject,
    scan_of,
)

SUBJECT_SEED_STRIDE = 100_000


@dataclass
class ScanRecord:
    subject_id: str
    scan_id: str
    cohort: CohortId
    volume_path: Path
    labels_path: Path
    shape: tuple[int, int, int]
    raw_volumes: dict[RegionId, int]
    normalized: AttributeVector | None = field(default=None, compare=False)

    def volume(self) -> np.ndarray:
        return np.fromfile(self.volume_path, dtype="<f4").reshape(self.shape)

    def labels(self) -> np.ndarray:
        return np.fromfile(self.labels_path, dtype=np.uint8).reshape(self.shape)

    def check(self) -> None:
        if region_volumes(self.labels()) != self.raw_volumes:
            raise ValueError(f"{self.scan_id}: stored volumes disagree with the label map")


def _scan_dir(root: Path, scan_id: str) -> Path:
    return root / scan_id.replace("/", "_")


def write_scan(root: Path, subject_id: str, scan_id: str, cohort: CohortId,
               vol: np.ndarray, labels: np.ndarray) -> ScanRecord:
    d = _scan_dir(root, scan_id)
    d.mkdir(parents=True, exist_ok=True)
    np.ascontiguousarray(vol, dtype="<f4").tofile(d / "volume.f32")
    np.ascontiguousarray(labels, dtype=np.uint8).tofile(d / "labels.u8")
    raw = region_volumes(labels)
    meta = {"subject_id": subject_id, "scan_id": scan_id, "cohort": cohort.value,
            "shape": list(vol.shape), "dtype": "float32-le", "order": "C",
            "raw_volumes": {r.symbol: raw[r] for r in REGIONS}}
    (d / "meta.json").write_text(json.dumps(meta, indent=2))
    return ScanRecord(subject_id, scan_id, cohort, d / "volume.f32", d / "labels.u8",
                      tuple(vol.shape), raw)


def read_scan(d: str | os.PathLike) -> ScanRecord:
    d = Path(d)
    meta = json.loads((d / "meta.json").read_text())
    raw = {RegionId.parse(k): int(v) for k, v in meta["raw_volumes"].items()}
    return ScanRecord(meta["subject_id"], meta["scan_id"], CohortId(meta["cohort"]),
                      d / "volume.f32", d / "labels.u8", tuple(meta["shape"]), raw)


def subject_seed(cfg: DataConfig, index: int) -> int:
    return cfg.seed * SUBJECT_SEED_STRIDE + index


def make_dataset(cfg: DataConfig, root: str | os.PathLike) -> list[ScanRecord]:
    """Render every scan of both cohorts under ``root``; returns records in creation order."""
    root = Path(root)
    dims = (cfg.resolution,) * 3
    records = []
    plan = [(CohortId.A, cfg.subjects_a, cfg.scans_a), (CohortId.B, cfg.subjects_b, cfg.scans_b)]
    for cohort, n_subjects, n_scans in plan:
        for i in range(n_subjects):
            spec = sample_subject(cohort, subject_seed(cfg, i), noise_sigma=cfg.noise_sigma)
            for k in range(n_scans):
                vol, labels = render_phantom(scan_of(spec, k, cfg.volume_jitter), dims)
                records.append(write_scan(root, spec.subject_id, f"{spec.subject_id}/{k}",
                                          cohort, vol, labels))
    (root / "index.json").write_text(json.dumps([r.scan_id for r in records]))
    return records


def load_dataset(root: str | os.PathLike) -> list[ScanRecord]:
    root = Path(root)
    ids = json.loads((root / "index.json").read_text())
    return [read_scan(_scan_dir(root, s)) for s in ids]


def split_dataset(scans: Sequence[ScanRecord], ratio: float = 0.9, seed: int = 0
                  ) -> tuple[list[ScanRecord], list[ScanRecord]]:
    """Split by subject so that no subject contributes scans to both sides."""
    if not 0.0 < ratio < 1.0:
        raise ConfigError(f"split ratio must lie in (0, 1), got {ratio}")
    subjects = sorted({s.subject_id for s in scans})
    if len(subjects) < 10:
        raise TooFewSubjects(f"need at least 10 subjects to split, got {len(subjects)}")
    order = np.random.default_rng(seed).permutation(len(subjects))
    n_train = min(len(subjects) - 1, max(1, int(math.floor(ratio * len(subjects) + 0.5))))
    train_ids = {subjects[i] for i in order[:n_train]}
    train = [s for s in scans if s.subject_id in train_ids]
    test = [s for s in scans if s.subject_id not in train_ids]
    return train, test


def fit_train_normalizer(train: Sequence[ScanRecord]) -> Normalizer:
    return fit_normalizer([s.raw_volumes for s in train])


def attach(scans: Sequence[ScanRecord], normalizer: Normalizer) -> list[ScanRecord]:
    for s in scans:
        s.normalized = AttributeVector.from_array(normalizer.normalize_counts(s.raw_volumes))
    return list(scans)


def training_pairs(scans: Sequence[ScanRecord]) -> list[tuple[np.ndarray, AttributeVector]]:
    return [(s.volume(), _attrs(s)) for s in scans]


def eval_items(scans: Sequence[ScanRecord]) -> list[EvalItem]:
    return [EvalItem(s.scan_id, s.volume(), _attrs(s)) for s in scans]


def _attrs(s: ScanRecord) -> AttributeVector:
    if s.normalized is None:
        raise ValueError(f"{s.scan_id} has no normalized attributes attached")
    return s.normalized
