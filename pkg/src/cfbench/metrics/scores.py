"""Dataset-level scores for the six evaluation axes.

Every score iterates over items sorted by ``item_id`` and draws per-item
randomness from a seed derived from (base seed, item id, target), so results
do not depend on input order or on the number of worker threads.
"""

from __future__ import annotations

import os
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

from cfbench import engine
from cfbench.attributes import AttributeVector, sample_intervention
from cfbench.errors import ShapeMismatch
from cfbench.metrics.features import FeatureExtractor, extract_features_batch
from cfbench.metrics.frechet import frechet_distance
from cfbench.metrics.image import SsimParams, l1_distance, ssim3d
from cfbench.models import ModelCheckpoint
from cfbench.phantoms import REGIONS, RegionId, oracle_segment, region_volumes

T = TypeVar("T")


@dataclass(frozen=True)
class EvalItem:
    """One factual scan: id (subject id plus scan suffix), image, normalized attributes."""

    item_id: str
    volume: np.ndarray
    attrs: AttributeVector

    @property
    def subject_id(self) -> str:
        return self.item_id.split("/")[0]


def workers() -> int:
    try:
        return max(1, int(os.environ.get("CFBENCH_WORKERS", "1")))
    except ValueError:
        return 1


def _ordered(items: Iterable[EvalItem]) -> list[EvalItem]:
    items = sorted(items, key=lambda it: it.item_id)
    if not items:
        raise ValueError("empty evaluation set")
    return items


def _map(fn: Callable[[EvalItem], T], items: Sequence[EvalItem]) -> list[T]:
    n = workers()
    if n == 1 or len(items) == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def base_seed(rng: np.random.Generator) -> int:
    """Draw one integer from ``rng``; per-item streams are derived from it."""
    return int(rng.integers(0, 2**31 - 1))


def item_rng(seed: int, item_id: str, target: RegionId | None = None) -> np.random.Generator:
    key = [seed, zlib.crc32(item_id.encode())]
    if target is not None:
        key.append(int(target))
    return np.random.default_rng(key)


def composition_score(ckpt: ModelCheckpoint, items: Sequence[EvalItem],
                      passes: Sequence[int] = (1, 10),
                      ssim_params: SsimParams = SsimParams()) -> dict[int, dict[str, float]]:
    """Mean l1 / SSIM between each factual image and its k-th null pass."""
    items = _ordered(items)
    passes = sorted(set(passes))

    def one(it):
        chain = engine.null_pass_chain(ckpt, it.volume, it.attrs, passes[-1])
        return [(l1_distance(it.volume, chain[k - 1]), ssim3d(it.volume, chain[k - 1], ssim_params))
                for k in passes]

    rows = np.array(_map(one, items))
    return {k: {"l1": float(rows[:, i, 0].mean()), "ssim": float(rows[:, i, 1].mean())}
            for i, k in enumerate(passes)}


def reversibility_score(ckpt: ModelCheckpoint, items: Sequence[EvalItem],
                        cycles: Sequence[int] = (1, 3),
                        rng: np.random.Generator | None = None,
                        remeasure: bool = False) -> dict[int, float]:
    """Mean l1 to the factual after n forward/reverse cycles, over items and all targets."""
    items = _ordered(items)
    cycles = sorted(set(cycles))
    seed = base_seed(rng if rng is not None else np.random.default_rng(0))

    def one(it):
        out = []
        for target in REGIONS:
            trace = engine.reversibility_chain(ckpt, it.volume, it.attrs, target, cycles[-1],
                                               item_rng(seed, it.item_id, target),
                                               remeasure=remeasure)
            out.append([l1_distance(it.volume, trace.after_cycles(c)) for c in cycles])
        return out

    rows = np.array(_map(one, items))
    return {c: float(rows[:, :, i].mean()) for i, c in enumerate(cycles)}


def realism_score(ckpt: ModelCheckpoint, items: Sequence[EvalItem],
                  fx: FeatureExtractor | None = None) -> float:
    """Fréchet distance between factual images and their null counterfactuals."""
    items = _ordered(items)
    fx = fx or FeatureExtractor(ckpt.config.resolution)
    fakes = _map(lambda it: engine.counterfactual(
        engine.CounterfactualRequest(ckpt, it.volume, it.attrs)), items)
    real = extract_features_batch(fx, [it.volume for it in items])
    return frechet_distance(real, extract_features_batch(fx, fakes))


@dataclass(frozen=True)
class InterventionOutcome:
    item_id: str
    target: RegionId
    value: float
    factual: np.ndarray   # normalized, REGIONS order
    realized: np.ndarray  # normalized measurement of the counterfactual


def measure(ckpt: ModelCheckpoint, vol: np.ndarray) -> np.ndarray:
    """Oracle-segment a volume and normalize its region volumes (clamped)."""
    return ckpt.normalizer.normalize_counts(region_volumes(oracle_segment(vol)))


def intervention_outcomes(ckpt: ModelCheckpoint, items: Sequence[EvalItem], target,
                          rng: np.random.Generator | None = None,
                          generate: Callable[[EvalItem, object], np.ndarray] | None = None,
                          ) -> list[InterventionOutcome]:
    """One random do(target) per item; ``generate`` can replace the model."""
    items = _ordered(items)
    target = RegionId.parse(target)
    seed = base_seed(rng if rng is not None else np.random.default_rng(0))

    def one(it):
        iv = sample_intervention(it.attrs, target, item_rng(seed, it.item_id, target))
        if generate is None:
            cf = engine.counterfactual(engine.CounterfactualRequest(ckpt, it.volume, it.attrs, iv))
        else:
            cf = generate(it, iv)
        if np.shape(cf) != np.shape(it.volume):
            raise ShapeMismatch(f"counterfactual {np.shape(cf)} vs factual {np.shape(it.volume)}")
        return InterventionOutcome(it.item_id, target, iv.value, it.attrs.as_array(),
                                   measure(ckpt, cf))

    return _map(one, items)


def effectiveness_from(outcomes: Sequence[InterventionOutcome]) -> float:
    idx = [REGIONS.index(o.target) for o in outcomes]
    return float(np.mean([abs(o.value - o.realized[i]) for o, i in zip(outcomes, idx)]))


def minimality_from(outcomes: Sequence[InterventionOutcome]) -> dict[RegionId, float]:
    target = outcomes[0].target
    diffs = np.array([np.abs(o.realized - o.factual) for o in outcomes])
    return {r: float(diffs[:, i].mean()) for i, r in enumerate(REGIONS) if r is not target}


def effectiveness_score(ckpt, items, target, rng=None) -> float:
    return effectiveness_from(intervention_outcomes(ckpt, items, target, rng))


def minimality_score(ckpt, items, target, rng=None) -> dict[RegionId, float]:
    return minimality_from(intervention_outcomes(ckpt, items, target, rng))


def generalizability_score(ckpt, cohort_b_items, target, rng=None) -> float:
    """Effectiveness protocol on another cohort, measured with the checkpoint's normalizer."""
    return effectiveness_score(ckpt, cohort_b_items, target, rng)

