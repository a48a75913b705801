"""Acceptance suite: one test (and one printed PASS/FAIL line) per criterion.

The end-to-end criteria share one benchmark run driven by
``configs/acceptance.json``. Set ``CFBENCH_ACCEPTANCE_DIR`` to keep its stage
cache between sessions; otherwise it trains from scratch in a temporary
directory.
"""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from cfbench import models
from cfbench.attributes import AttributeVector, fit_normalizer
from cfbench.harness import pipeline
from cfbench.harness import data as ds
from cfbench.harness.config import BenchmarkConfig, load_config
from cfbench.harness.report import emit_report
from cfbench.metrics import (
    EvalItem,
    composition_score,
    frechet_distance,
    l1_distance,
    realism_score,
    reversibility_score,
    sqrtm_psd,
    ssim3d,
)
from cfbench.models import Family
from cfbench.phantoms import (
    REGIONS,
    RegionId,
    dice,
    oracle_segment,
    region_volumes,
    render_phantom,
    sample_subject,
)
from oracles import brute_l1, brute_ssim

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "acceptance.json"
TRAINED_REQUIRED = ("VAE", "GAN")


def _items(n, cohort="A", seed0=500):
    vols, raw = [], []
    for s in range(seed0, seed0 + n):
        v, lab = render_phantom(sample_subject(cohort, s))
        vols.append(v)
        raw.append(region_volumes(lab))
    norm = fit_normalizer(raw)
    return [EvalItem(f"{cohort}{s}/0", v, AttributeVector.from_array(norm.normalize_counts(r)))
            for s, v, r in zip(range(seed0, seed0 + n), vols, raw)], norm


# ---------------------------------------------------------------- 1

def test_criterion_1_identity_ideals(criterion):
    t = time.perf_counter()
    items, norm = _items(20)
    ckpt = models.identity_checkpoint(norm)
    comp = composition_score(ckpt, items, (1, 10))
    rev = reversibility_score(ckpt, items, (1, 3), np.random.default_rng(0))
    fid = realism_score(ckpt, items)
    elapsed = time.perf_counter() - t
    ok = (all(comp[k]["l1"] == 0.0 and comp[k]["ssim"] == 1.0 for k in (1, 10))
          and all(rev[c] == 0.0 for c in (1, 3)) and fid <= 1e-6 and elapsed < 60)
    criterion(1, "identity double ideals", ok,
              f"composition {comp}, reversibility {rev}, FID {fid:.2e}, {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- 2

def test_criterion_2_metric_math(criterion):
    t = time.perf_counter()
    rng = np.random.default_rng(2)
    a, b = rng.random((8, 8, 8)), rng.random((8, 8, 8))
    l1_err = abs(l1_distance(a, b) - brute_l1(a, b))
    ssim_err = max(abs(ssim3d(a, b) - brute_ssim(a, b)),
                   abs(ssim3d(a, a * 0.7 + 0.1) - brute_ssim(a, a * 0.7 + 0.1)))
    fd = frechet_distance(rng.normal(0, 1, (10_000, 1)), rng.normal(2, 1, (10_000, 1)))
    sqrt_err = 0.0
    for d in (1, 2, 8, 16, 32, 64):
        m = rng.normal(size=(d, d))
        spd = m @ m.T / d + np.eye(d)
        root = sqrtm_psd(spd)
        sqrt_err = max(sqrt_err, float(np.linalg.norm(root @ root - spd)))
    elapsed = time.perf_counter() - t
    ok = (l1_err <= 1e-9 and ssim_err <= 1e-9 and abs(fd - 4.0) <= 0.2 and sqrt_err <= 1e-8
          and elapsed < 120)
    criterion(2, "metric math against oracles", ok,
              f"l1 err {l1_err:.1e}, SSIM err {ssim_err:.1e}, FD {fd:.3f}, "
              f"sqrtm err {sqrt_err:.1e}, {elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- 3

def test_criterion_3_oracle_segmenter(criterion):
    t = time.perf_counter()
    clean, noisy = [], []
    for s in range(20):
        spec = sample_subject("A", 300 + s)
        vol, labels = render_phantom(spec, noise_sigma=0.0)
        seg = oracle_segment(vol)
        clean.append([dice(seg, labels, int(r)) for r in REGIONS])
        vol, labels = render_phantom(spec, noise_sigma=0.02)
        seg = oracle_segment(vol)
        noisy.append([dice(seg, labels, int(r)) for r in REGIONS])
    elapsed = time.perf_counter() - t
    ok = np.min(clean) == 1.0 and np.min(noisy) >= 0.95 and elapsed < 60
    criterion(3, "oracle segmenter Dice", ok,
              f"noiseless min {np.min(clean):.3f}, sigma=0.02 min {np.min(noisy):.3f}, "
              f"{elapsed:.1f}s")
    assert ok


# ---------------------------------------------------------------- 4-7 share one run

@pytest.fixture(scope="module")
def acceptance_run(tmp_path_factory):
    out = os.environ.get("CFBENCH_ACCEPTANCE_DIR") or str(tmp_path_factory.mktemp("acceptance"))
    cfg = load_config(CONFIG, [f"output_dir={json.dumps(out)}"])
    t = time.perf_counter()
    report = pipeline.run_benchmark(cfg)
    elapsed = time.perf_counter() - t
    emit_report(report, Path(out) / "report")
    return cfg, report, elapsed


def _trained(cfg: BenchmarkConfig):
    return [e.name for e in cfg.models if not e.untrained and e.model.family is not Family.IDENTITY]


def _baseline(cfg: BenchmarkConfig, name: str) -> str:
    fam = cfg.entry(name).model.family
    return next(e.name for e in cfg.models if e.untrained and e.model.family is fam)


def _fmt(d):
    return "{" + ", ".join(f"{r.symbol} {v:.3f}" for r, v in d.items()) + "}"


@pytest.mark.slow
def test_criterion_4a_effectiveness_bound(acceptance_run, criterion):
    cfg, report, elapsed = acceptance_run
    assert not report.errors, report.errors
    parts, ok = [], elapsed <= 3600
    for name in TRAINED_REQUIRED:
        eff = report.models[name].effectiveness
        ok &= all(v <= 0.25 for v in eff.values())
        parts.append(f"{name} {_fmt(eff)}")
    criterion("4a", "effectiveness MAE <= 0.25 per region", ok,
              "; ".join(parts) + f"; run {elapsed:.0f}s")
    assert ok


@pytest.mark.slow
def test_criterion_4b_beats_untrained(acceptance_run, criterion):
    cfg, report, _ = acceptance_run
    parts, ok = [], True
    for name in TRAINED_REQUIRED:
        eff = report.models[name].effectiveness
        base = report.models[_baseline(cfg, name)].effectiveness
        ok &= all(eff[r] < base[r] for r in REGIONS)
        parts.append(f"{name} mean {np.mean(list(eff.values())):.3f} vs untrained "
                     f"{np.mean(list(base.values())):.3f}")
    criterion("4b", "trained beats untrained baseline in every region", ok, "; ".join(parts))
    assert ok


@pytest.mark.slow
def test_criterion_4c_conditioning_sensitivity(acceptance_run, criterion):
    cfg, _, _ = acceptance_run
    ws = pipeline.prepare_data(cfg)
    parts, ok = [], True
    for name in TRAINED_REQUIRED:
        ckpt = pipeline.train_stage(cfg, ws, cfg.entry(name))
        diffs = []
        for it in ws.items("test"):
            arr = it.attrs.as_array().copy()
            ven = REGIONS.index(RegionId.VEN)
            arr[ven] = 1.0 if arr[ven] < 0 else -1.0
            z = models.encode(ckpt, it.volume, it.attrs)
            other = models.decode(ckpt, z, AttributeVector.from_array(arr))
            diffs.append(np.abs(models.decode(ckpt, z, it.attrs) - other).mean())
        ok &= float(np.mean(diffs)) > 1e-4
        parts.append(f"{name} mean |decode change| {np.mean(diffs):.4f}")
    criterion("4c", "decode responds to attribute changes", ok, "; ".join(parts))
    assert ok


@pytest.mark.slow
def test_criterion_5_drift_monotonicity(acceptance_run, criterion):
    cfg, report, _ = acceptance_run
    parts, ok = [], True
    for name in _trained(cfg):
        m = report.models[name]
        comp_ok = m.composition[10]["l1"] >= m.composition[1]["l1"] - 0.01
        rev_ok = m.reversibility[3] >= m.reversibility[1] - 0.01
        ok &= comp_ok and rev_ok
        parts.append(f"{name} l1 {m.composition[1]['l1']:.4f}->{m.composition[10]['l1']:.4f}, "
                     f"rev {m.reversibility[1]:.4f}->{m.reversibility[3]:.4f}")
    criterion(5, "composition and reversibility drift is monotone", ok, "; ".join(parts))
    assert ok


@pytest.mark.slow
def test_criterion_6_minimality_gap(acceptance_run, criterion):
    cfg, report, _ = acceptance_run
    parts, ok = [], False
    for name in _trained(cfg):
        m = report.models[name]
        nontarget = float(np.mean([v for row in m.minimality.values() for v in row.values()]))
        target = float(np.mean(list(m.effectiveness.values())))
        ok |= nontarget > target
        parts.append(f"{name} non-target {nontarget:.3f} vs target {target:.3f}")
    criterion(6, "non-target MAE exceeds target MAE for some family", ok, "; ".join(parts))
    assert ok


@pytest.mark.slow
def test_criterion_7_generalizability_shift(acceptance_run, criterion):
    _, report, _ = acceptance_run
    m = report.models["VAE"]
    a, b = m.effectiveness[RegionId.VEN], m.generalizability[RegionId.VEN]
    ok = b >= a - 0.02
    criterion(7, "VAE Ven effectiveness does not improve on cohort B", ok,
              f"cohort A {a:.3f}, cohort B {b:.3f}")
    assert ok


# ---------------------------------------------------------------- 8

HYGIENE = {
    "data": {"subjects_a": 12, "subjects_b": 2, "scans_a": 2, "scans_b": 1, "seed": 3},
    "models": [
        {"name": "IDENTITY", "model": {"family": "IDENTITY"}},
        {"name": "VAE", "model": {"family": "VAE", "epochs": 1, "width": 4, "latent_dim": 8}},
    ],
    "metrics": {"passes": [1, 2], "cycles": [1, 2], "feature_dim": 16},
}


def _hygiene_cfg(out):
    return BenchmarkConfig.from_json({**HYGIENE, "output_dir": str(out)})


def test_criterion_8_harness_hygiene(tmp_path, monkeypatch, criterion):
    t = time.perf_counter()
    scans = [ds.ScanRecord(f"s{i:03d}", f"s{i:03d}/{k}", None, None, None, (32, 32, 32), {})
             for i in range(40) for k in range(3)]
    disjoint = True
    for seed in range(100):
        train, test = ds.split_dataset(scans, 0.9, seed)
        disjoint &= not ({s.subject_id for s in train} & {s.subject_id for s in test})

    first = emit_report(pipeline.run_benchmark(_hygiene_cfg(tmp_path / "a")), tmp_path / "ra")
    second = emit_report(pipeline.run_benchmark(_hygiene_cfg(tmp_path / "b")), tmp_path / "rb")
    rerun = first["report.json"].read_bytes() == second["report.json"].read_bytes()

    real, calls = pipeline.eval_axis, {"n": 0}

    def interrupted(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] == 9:
            raise KeyboardInterrupt
        return real(*args, **kwargs)

    monkeypatch.setattr(pipeline, "eval_axis", interrupted)
    with pytest.raises(KeyboardInterrupt):
        pipeline.run_benchmark(_hygiene_cfg(tmp_path / "c"))
    monkeypatch.setattr(pipeline, "eval_axis", real)
    resumed = emit_report(pipeline.run_benchmark(_hygiene_cfg(tmp_path / "c")), tmp_path / "rc")
    resume = first["report.json"].read_bytes() == resumed["report.json"].read_bytes()
    elapsed = time.perf_counter() - t
    ok = disjoint and rerun and resume and elapsed < 300
    criterion(8, "split disjointness, rerun determinism, resume", ok,
              f"disjoint over 100 seeds {disjoint}, rerun identical {rerun}, "
              f"resume identical {resume}, {elapsed:.1f}s")
    assert ok
