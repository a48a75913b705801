import itertools
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from cfbench.errors import RegionOverflow, ShapeMismatch
from cfbench.phantoms import (
    BACKGROUND,
    PROTOTYPES,
    REGIONS,
    TISSUE,
    CohortId,
    RegionId,
    RegionParams,
    dice,
    oracle_segment,
    paint_labels,
    region_volumes,
    render_phantom,
    sample_subject,
    scan_of,
)


def test_region_codes_are_bijective():
    assert len(REGIONS) == 7
    assert sorted(int(r) for r in REGIONS) == list(range(1, 8))
    assert BACKGROUND not in {int(r) for r in REGIONS}
    assert TISSUE not in {int(r) for r in REGIONS}
    assert RegionId.parse("ven") is RegionId.VEN
    assert RegionId.parse("Fro") is RegionId.FRO
    with pytest.raises(ValueError):
        RegionId.parse("Hip")


def test_prototypes_well_separated():
    gaps = np.diff(np.sort(PROTOTYPES))
    assert gaps.min() >= 0.05 - 1e-7


def test_sample_subject_deterministic():
    assert sample_subject("A", 7) == sample_subject("A", 7)


def test_sample_subject_seed_sensitive():
    assert sample_subject("A", 7).region_params != sample_subject("A", 8).region_params


def test_cohort_ventricles_larger_in_a():
    def ven_axes(cohort):
        return np.array([
            np.mean(sample_subject(cohort, s).region_params[RegionId.VEN].semi_axes)
            for s in range(200)
        ])

    a, b = ven_axes(CohortId.A), ven_axes(CohortId.B)
    assert a.mean() > b.mean()


def test_cohort_ventricle_volume_stochastic_dominance():
    def ven_volumes(cohort):
        return np.array([
            region_volumes(paint_labels(sample_subject(cohort, s), (32, 32, 32)))[RegionId.VEN]
            for s in range(200)
        ])

    a, b = ven_volumes("A"), ven_volumes("B")
    res = stats.mannwhitneyu(a, b, alternative="greater")
    assert res.pvalue < 1e-6
    # empirical CDF of A never above that of B
    grid = np.unique(np.concatenate([a, b]))
    cdf_a = np.searchsorted(np.sort(a), grid, side="right") / a.size
    cdf_b = np.searchsorted(np.sort(b), grid, side="right") / b.size
    assert np.all(cdf_a <= cdf_b + 0.05)


def test_noiseless_render_is_prototype_exact(phantom_a):
    spec, _, labels = phantom_a
    vol, labels2 = render_phantom(spec, noise_sigma=0.0)
    np.testing.assert_array_equal(labels, labels2)
    np.testing.assert_array_equal(vol, PROTOTYPES[labels])


def test_render_deterministic(phantom_a):
    spec, vol, labels = phantom_a
    vol2, labels2 = render_phantom(spec)
    assert vol.tobytes() == vol2.tobytes()
    assert labels.tobytes() == labels2.tobytes()


def test_render_value_range(phantom_a):
    _, vol, labels = phantom_a
    assert vol.dtype == np.float32 and labels.dtype == np.uint8
    assert vol.min() >= 0.0 and vol.max() <= 1.0
    assert labels.max() <= 8


def _brute_force_ellipsoid_count(dims, center, semi_axes):
    count = 0
    offs = [(d - 1) / 2.0 for d in dims]
    for i, j, k in itertools.product(*(range(d) for d in dims)):
        p = (i - offs[0], j - offs[1], k - offs[2])
        if sum(((p[n] - center[n]) / semi_axes[n]) ** 2 for n in range(3)) <= 1.0:
            count += 1
    return count


def _single_region_spec(semi_axes, region=RegionId.VEN):
    spec = sample_subject("A", 3)
    tiny = RegionParams(center=(0.0, 0.0, -0.6), semi_axes=(0.3, 0.3, 0.3))
    params = {r: tiny for r in REGIONS}
    params[region] = RegionParams(center=(0.0, 0.0, 0.0), semi_axes=semi_axes)
    return replace(spec, region_params=params)


def test_ellipsoid_voxel_count_matches_brute_force():
    spec = _single_region_spec((4.0, 3.0, 3.0))
    labels = paint_labels(spec, (32, 32, 32))
    counted = region_volumes(labels)[RegionId.VEN]
    oracle = _brute_force_ellipsoid_count((32, 32, 32), (0.0, 0.0, 0.0), (4.0, 3.0, 3.0))
    assert counted == oracle
    analytic = 4.0 / 3.0 * np.pi * 4 * 3 * 3
    assert abs(counted - analytic) <= 0.08 * analytic


@pytest.mark.parametrize("s", [0.8, 1.2, 1.4])
def test_volume_scales_with_cube_of_axes(s):
    base = (3.5, 4.0, 3.0)
    v0 = region_volumes(paint_labels(_single_region_spec(base), (32, 32, 32)))[RegionId.VEN]
    v1 = region_volumes(paint_labels(
        _single_region_spec(tuple(a * s for a in base)), (32, 32, 32)))[RegionId.VEN]
    assert abs(v1 / v0 - s**3) <= 0.10 * s**3


def test_region_overflow_raised():
    spec = _single_region_spec((4.0, 3.0, 3.0))
    params = dict(spec.region_params)
    params[RegionId.FRO] = RegionParams(center=(0.0, 0.95, 0.0), semi_axes=(3.0, 3.0, 3.0))
    with pytest.raises(RegionOverflow):
        paint_labels(replace(spec, region_params=params), (32, 32, 32))


def test_render_rejects_tiny_grid(phantom_a):
    with pytest.raises(ShapeMismatch):
        render_phantom(phantom_a[0], (8, 32, 32))


def test_sampled_subjects_always_fit():
    for cohort in "AB":
        for seed in range(300):
            paint_labels(sample_subject(cohort, seed), (32, 32, 32))


def test_scans_share_geometry_with_small_volume_jitter():
    spec = sample_subject("A", 11)
    base = region_volumes(paint_labels(spec, (32, 32, 32)))
    for k in (1, 2):
        scan = scan_of(spec, k)
        assert scan.noise_seed != spec.noise_seed
        for r in REGIONS:
            assert scan.region_params[r].center == spec.region_params[r].center
        vols = region_volumes(paint_labels(scan, (32, 32, 32)))
        for r in REGIONS:
            # ±3% volume plus discretization of small regions
            assert abs(vols[r] - base[r]) <= 0.03 * base[r] + 12


def test_oracle_exact_on_noiseless():
    for seed in range(5):
        for cohort in "AB":
            vol, labels = render_phantom(sample_subject(cohort, seed), noise_sigma=0.0)
            seg = oracle_segment(vol)
            np.testing.assert_array_equal(seg, labels)
            assert all(dice(seg, labels, int(r)) == 1.0 for r in REGIONS)


def test_oracle_dice_with_noise():
    dices = []
    for seed in range(20):
        vol, labels = render_phantom(sample_subject("A", seed), noise_sigma=0.02)
        seg = oracle_segment(vol)
        dices.append([dice(seg, labels, int(r)) for r in REGIONS])
    assert np.min(dices) >= 0.95


def test_oracle_constant_tissue_image():
    vol = np.full((20, 20, 20), PROTOTYPES[TISSUE], dtype=np.float32)
    assert np.all(oracle_segment(vol) == TISSUE)


def test_region_volumes_counting():
    labels = np.zeros((16, 16, 16), dtype=np.uint8)
    assert all(v == 0 for v in region_volumes(labels).values())
    labels.ravel()[:151] = int(RegionId.VEN)
    assert region_volumes(labels)[RegionId.VEN] == 151


def test_region_volumes_match_histogram(phantom_a):
    _, _, labels = phantom_a
    hist = {}
    for code in labels.ravel().tolist():
        hist[code] = hist.get(code, 0) + 1
    vols = region_volumes(labels)
    for r in REGIONS:
        assert vols[r] == hist.get(int(r), 0)
