"""Stage orchestration with a content-addressed, resumable cache."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from cfbench import __version__, models
from cfbench.attributes import Normalizer
from cfbench.errors import StageFailure
from cfbench.harness import data as ds
from cfbench.harness.config import AXES, BenchmarkConfig, ModelEntry, canonical
from cfbench.metrics import FeatureExtractor, MetricReport, ModelMetrics
from cfbench.metrics import scores
from cfbench.models import Family, ModelCheckpoint
from cfbench.phantoms import REGIONS, CohortId, RegionId

log = logging.getLogger(__name__)

AXIS_CODES = {axis: i for i, axis in enumerate(AXES)}


class StageCache:
    """Stage outputs live in ``<root>/<stage>-<key hash>``; a directory exists only once complete."""

    def __init__(self, root: str | os.PathLike):
        self.root = Path(root)

    def path(self, stage: str, key: Any) -> Path:
        digest = hashlib.sha256(canonical({"stage": stage, "key": key}).encode()).hexdigest()
        return self.root / f"{stage}-{digest[:20]}"

    def get_or_build(self, stage: str, key: Any, build: Callable[[Path], None]) -> Path:
        final = self.path(stage, key)
        if final.is_dir():
            return final
        partial = final.with_name(final.name + ".partial")
        if partial.exists():
            shutil.rmtree(partial)
        partial.mkdir(parents=True)
        (partial / "key.json").write_text(json.dumps({"stage": stage, "key": key}, indent=2,
                                                     sort_keys=True))
        build(partial)
        os.replace(partial, final)
        return final


@dataclass
class Workspace:
    """Everything derived from the data stage that later stages need."""

    train: list[ds.ScanRecord]
    test: list[ds.ScanRecord]
    cohort_b: list[ds.ScanRecord]
    normalizer: Normalizer
    data_key: dict
    _items: dict[str, list] = field(default_factory=dict)

    def items(self, which: str) -> list[scores.EvalItem]:
        if which not in self._items:
            self._items[which] = ds.eval_items(self.test if which == "test" else self.cohort_b)
        return self._items[which]


def _cache(cfg: BenchmarkConfig) -> StageCache:
    return StageCache(Path(cfg.output_dir) / "cache")


def prepare_data(cfg: BenchmarkConfig) -> Workspace:
    key = {"data": vars(cfg.data).copy(), "version": 1}
    root = _cache(cfg).get_or_build("data", key, lambda p: ds.make_dataset(cfg.data, p))
    records = ds.load_dataset(root)
    cohort_a = [r for r in records if r.cohort is CohortId.A]
    cohort_b = [r for r in records if r.cohort is CohortId.B]
    train, test = ds.split_dataset(cohort_a, cfg.data.split_ratio, cfg.data.seed)
    normalizer = ds.fit_train_normalizer(train)
    for group in (train, test, cohort_b):
        ds.attach(group, normalizer)
    return Workspace(train, test, cohort_b, normalizer, key)


def _train_key(ws: Workspace, entry: ModelEntry) -> dict:
    return {"data": ws.data_key, "model": entry.model.to_json(), "untrained": entry.untrained}


def train_stage(cfg: BenchmarkConfig, ws: Workspace, entry: ModelEntry) -> ModelCheckpoint:
    def build(p: Path) -> None:
        if entry.untrained or entry.model.family is Family.IDENTITY:
            ckpt = models.init_checkpoint(entry.model, ws.normalizer)
        else:
            ckpt = models.train(entry.model, ds.training_pairs(ws.train), ws.normalizer)
        ckpt.save(p / "checkpoint")

    path = _cache(cfg).get_or_build("train", _train_key(ws, entry), build)
    return ModelCheckpoint.load(path / "checkpoint")


def _rng(cfg: BenchmarkConfig, axis: str, target: RegionId | None = None) -> np.random.Generator:
    key = [cfg.metrics.seed, AXIS_CODES[axis]]
    if target is not None:
        key.append(int(target))
    return np.random.default_rng(key)


def _intervention_stage(cfg, ws, entry, ckpt, cohort: str) -> dict:
    axis = "effectiveness" if cohort == "test" else "generalizability"

    def compute() -> dict:
        out = {"effectiveness": {}, "minimality": {}}
        for target in REGIONS:
            outcomes = scores.intervention_outcomes(ckpt, ws.items(cohort), target,
                                                    _rng(cfg, axis, target))
            out["effectiveness"][target.symbol] = scores.effectiveness_from(outcomes)
            out["minimality"][target.symbol] = {
                r.symbol: v for r, v in scores.minimality_from(outcomes).items()}
        return out

    return _eval_cached(cfg, ws, entry, f"interventions-{cohort}", compute)


def _eval_cached(cfg, ws, entry, name: str, compute: Callable[[], Any]) -> Any:
    settings = {k: v for k, v in cfg.to_json()["metrics"].items() if k != "axes"}
    key = {"train": _train_key(ws, entry), "metrics": settings, "name": name}

    def build(p: Path) -> None:
        (p / "result.json").write_text(json.dumps(compute(), sort_keys=True))

    path = _cache(cfg).get_or_build("eval", key, build)
    return json.loads((path / "result.json").read_text())


def eval_axis(cfg: BenchmarkConfig, ws: Workspace, entry: ModelEntry, ckpt: ModelCheckpoint,
              axis: str, into: ModelMetrics) -> None:
    m = cfg.metrics
    if axis == "composition":
        res = _eval_cached(cfg, ws, entry, axis, lambda: {
            str(k): v for k, v in scores.composition_score(
                ckpt, ws.items("test"), m.passes, m.ssim).items()})
        into.composition = {int(k): v for k, v in res.items()}
    elif axis == "reversibility":
        res = _eval_cached(cfg, ws, entry, axis, lambda: {
            str(k): v for k, v in scores.reversibility_score(
                ckpt, ws.items("test"), m.cycles, _rng(cfg, axis),
                remeasure=m.remeasure_nontarget).items()})
        into.reversibility = {int(k): v for k, v in res.items()}
    elif axis == "realism":
        fx = FeatureExtractor(cfg.data.resolution, m.feature_dim, m.feature_seed)
        into.realism = _eval_cached(cfg, ws, entry, axis,
                                    lambda: scores.realism_score(ckpt, ws.items("test"), fx))
    elif axis in ("effectiveness", "minimality"):
        res = _intervention_stage(cfg, ws, entry, ckpt, "test")
        into.effectiveness = {RegionId.parse(k): v for k, v in res["effectiveness"].items()}
        into.minimality = {RegionId.parse(t): {RegionId.parse(r): v for r, v in row.items()}
                           for t, row in res["minimality"].items()}
    elif axis == "generalizability":
        if not ws.cohort_b:
            raise StageFailure("generalizability needs cohort B scans (data.subjects_b > 0)")
        res = _intervention_stage(cfg, ws, entry, ckpt, "cohort_b")
        into.generalizability = {RegionId.parse(k): v for k, v in res["effectiveness"].items()}
    else:
        raise StageFailure(f"unknown axis {axis!r}")


def provenance(cfg: BenchmarkConfig, ws: Workspace) -> dict:
    split = {"train_subjects": sorted({s.subject_id for s in ws.train}),
             "test_subjects": sorted({s.subject_id for s in ws.test})}
    return {
        "config_hash": cfg.hash(),
        "config": {k: v for k, v in cfg.to_json().items() if k != "output_dir"},
        "package_version": __version__,
        "seeds": {"data": cfg.data.seed, "metrics": cfg.metrics.seed,
                  "feature_extractor": cfg.metrics.feature_seed,
                  "models": {e.name: e.model.seed for e in cfg.models}},
        "split": {**split, "sha256": hashlib.sha256(canonical(split).encode()).hexdigest()},
        "scans": {"train": len(ws.train), "test": len(ws.test), "cohort_b": len(ws.cohort_b)},
        "normalizer": ws.normalizer.to_json(),
    }


def run_benchmark(cfg: BenchmarkConfig, families: list[str] | None = None,
                  axes: tuple[str, ...] | None = None) -> MetricReport:
    """Run every stage (reusing cached ones) and return the assembled report.

    Failures of a training or evaluation stage are recorded in
    ``report.errors`` and the remaining work still runs.
    """
    cfg.validate()
    ws = prepare_data(cfg)
    report = MetricReport(provenance=provenance(cfg, ws))
    axes = axes or cfg.metrics.axes
    for entry in cfg.models:
        if families is not None and entry.name not in families:
            continue
        try:
            ckpt = train_stage(cfg, ws, entry)
        except Exception as exc:  # recorded, other models continue
            log.exception("training %s failed", entry.name)
            report.errors[f"{entry.name}/train"] = f"{type(exc).__name__}: {exc}"
            continue
        metrics = ModelMetrics()
        for axis in axes:
            try:
                eval_axis(cfg, ws, entry, ckpt, axis, metrics)
            except Exception as exc:
                log.exception("evaluating %s on %s failed", entry.name, axis)
                report.errors[f"{entry.name}/{axis}"] = f"{type(exc).__name__}: {exc}"
        report.models[entry.name] = metrics
    report.validate()
    return report
