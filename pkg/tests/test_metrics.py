"""Overlap and surface-distance metrics, checked against hand arithmetic
and the independent brute-force route."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from levelqa.errors import GeometryMismatchError, LabelDomainError, UndefinedMetricError
from levelqa.metrics import (
    boundary_faces,
    default_tolerance,
    evaluate_case,
    hausdorff_max,
    surface_dice,
    volumetric_dice,
)
from levelqa.phantom import (
    PhantomConfig,
    generate_phantom,
    oracle_metrics,
    perturb_boundary_jitter,
    perturb_morphological,
)

from conftest import label_volume, make_grid


def _mask(shape, coords):
    m = np.zeros(shape, dtype=bool)
    for c in coords:
        m[c] = True
    return m


# -- volumetric dice -----------------------------------------------------------

def test_vol_dice_hand_cases():
    a = _mask((4, 4, 4), [(1, 1, 1), (1, 1, 2), (1, 2, 1), (1, 2, 2),
                          (2, 1, 1), (2, 1, 2), (2, 2, 1), (2, 2, 2)])
    assert volumetric_dice(a, a) == 1.0
    b = np.roll(a, 1, axis=2)  # same cube shifted 1 voxel in x
    assert volumetric_dice(a, b) == 2 * 4 / 16
    disjoint = np.roll(a, 2, axis=0)
    assert volumetric_dice(a, disjoint) == 0.0


def test_vol_dice_empty_conventions():
    e = np.zeros((3, 3, 3), dtype=bool)
    f = _mask((3, 3, 3), [(1, 1, 1)])
    assert volumetric_dice(e, e) == 1.0
    assert volumetric_dice(e, f) == 0.0
    assert volumetric_dice(f, e) == 0.0


def test_vol_dice_shape_mismatch():
    with pytest.raises(UndefinedMetricError):
        volumetric_dice(np.zeros((2, 2, 2), bool), np.zeros((3, 3, 3), bool))


# -- boundary faces --------------------------------------------------------------

def test_single_voxel_faces():
    m = _mask((3, 3, 3), [(1, 1, 1)])
    centers, areas = boundary_faces(m, (2.0, 3.0, 5.0))  # (sz, sy, sx)
    assert centers.shape == (6, 3)
    # areas: 2 faces per axis; z faces are sy*sx etc.
    assert sorted(areas.tolist()) == sorted([15.0, 15.0, 10.0, 10.0, 6.0, 6.0])
    assert np.isclose(areas.sum(), 2 * (15.0 + 10.0 + 6.0))
    # face centers sit half a voxel off the voxel center along the normal
    zs = sorted(c[0] for c in centers if np.isclose(c[1], 3.0) and np.isclose(c[2], 5.0))
    assert np.allclose(zs, [(1 - 0.5) * 2.0, (2 - 0.5) * 2.0])


def test_two_voxel_bar_merges_internal_faces():
    m = _mask((3, 3, 4), [(1, 1, 1), (1, 1, 2)])
    centers, areas = boundary_faces(m, (1.0, 1.0, 1.0))
    # 2 voxels x 6 faces - 2 internal = 10 exposed faces
    assert centers.shape == (10, 3)
    assert np.isclose(areas.sum(), 10.0)


def test_empty_mask_has_no_faces():
    centers, areas = boundary_faces(np.zeros((2, 2, 2), bool), (1.0, 1.0, 1.0))
    assert centers.shape[0] == 0 and areas.shape[0] == 0


# -- surface dice -----------------------------------------------------------------

def test_surface_dice_identical():
    m = _mask((4, 4, 4), [(1, 1, 1), (1, 1, 2), (2, 1, 1)])
    g = make_grid((4, 4, 4))
    assert surface_dice(m, m, g, 0.0) == 1.0


def test_surface_dice_far_apart_is_zero():
    g = make_grid((60, 4, 4), spacing=(1.0, 1.0, 1.0))
    a = _mask((4, 4, 60), [(1, 1, 1)])
    b = _mask((4, 4, 60), [(1, 1, 51)])  # 50 mm away
    assert surface_dice(a, b, g, 3.0) == 0.0


def test_surface_dice_exact_tolerance_is_inclusive():
    """Two unit voxels 2 apart: facing faces at exactly 1 mm count at tol=1."""
    g = make_grid((5, 3, 3))
    a = _mask((3, 3, 5), [(1, 1, 0)])
    b = _mask((3, 3, 5), [(1, 1, 2)])
    # facing face pair: a's +x face at x=0.5, b's -x face at x=1.5 -> d=1.0;
    # every other face pair is farther
    d = surface_dice(a, b, g, 1.0)
    assert d == pytest.approx((1.0 + 1.0) / 12.0, abs=1e-15)
    assert surface_dice(a, b, g, np.nextafter(1.0, 0.0)) == 0.0


def test_surface_dice_one_empty():
    g = make_grid((3, 3, 3))
    e = np.zeros((3, 3, 3), bool)
    f = _mask((3, 3, 3), [(1, 1, 1)])
    assert surface_dice(e, e, g, 1.0) == 1.0
    assert surface_dice(e, f, g, 1.0) == 0.0


def test_surface_dice_anisotropic_spacing():
    """A one-slice shift equals the z spacing, not one unit."""
    g = make_grid((4, 4, 6), spacing=(1.0, 1.0, 3.0))
    a = _mask((6, 4, 4), [(1, 1, 1), (1, 1, 2), (1, 2, 1), (1, 2, 2)])
    b = np.roll(a, 1, axis=0)
    assert surface_dice(a, b, g, 3.0) == 1.0
    assert surface_dice(a, b, g, 2.9) < 1.0


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_surface_dice_monotone_in_tolerance(seed):
    rng = np.random.default_rng(seed)
    a = rng.random((5, 6, 7)) < 0.35
    b = rng.random((5, 6, 7)) < 0.35
    g = make_grid((7, 6, 5), spacing=(0.8, 1.1, 2.5))
    last = -1.0
    for tol in (0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 50.0):
        d = surface_dice(a, b, g, tol)
        assert d >= last - 1e-12
        last = d
    if a.any() and b.any():
        assert last == 1.0  # everything within a huge tolerance


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_metric_symmetry(seed):
    rng = np.random.default_rng(seed)
    a = rng.random((4, 5, 6)) < 0.4
    b = rng.random((4, 5, 6)) < 0.4
    g = make_grid((6, 5, 4), spacing=(1.0, 1.3, 2.0))
    assert volumetric_dice(a, b) == volumetric_dice(b, a)
    assert surface_dice(a, b, g, 1.5) == surface_dice(b, a, g, 1.5)
    if a.any() and b.any():
        assert hausdorff_max(a, b, g) == hausdorff_max(b, a, g)


# -- hausdorff --------------------------------------------------------------------

def test_hausdorff_hand_cases():
    g = make_grid((8, 4, 4), spacing=(1.0, 1.0, 1.0))
    a = _mask((4, 4, 8), [(1, 1, 1)])
    assert hausdorff_max(a, a, g) == 0.0
    b = _mask((4, 4, 8), [(1, 1, 4)])  # 3 voxels along x
    assert hausdorff_max(a, b, g) == 3.0


def test_hausdorff_anisotropic():
    g = make_grid((4, 4, 6), spacing=(1.0, 1.0, 3.0))
    a = _mask((6, 4, 4), [(1, 1, 1)])
    b = _mask((6, 4, 4), [(3, 1, 1)])  # 2 slices = 6 mm
    assert hausdorff_max(a, b, g) == 6.0


def test_hausdorff_is_max_of_directed():
    """A sprawling mask vs a tight one: the directed distances differ."""
    g = make_grid((12, 4, 4))
    a = _mask((4, 4, 12), [(1, 1, 1)])
    b = _mask((4, 4, 12), [(1, 1, 1), (1, 1, 10)])
    d = hausdorff_max(a, b, g)
    assert d == 9.0  # farthest b-boundary voxel to a


def test_hausdorff_empty_raises():
    g = make_grid((3, 3, 3))
    e = np.zeros((3, 3, 3), bool)
    f = _mask((3, 3, 3), [(1, 1, 1)])
    with pytest.raises(UndefinedMetricError):
        hausdorff_max(e, f, g)
    with pytest.raises(UndefinedMetricError):
        hausdorff_max(f, f * False, g)


# -- case evaluation ---------------------------------------------------------------

def test_default_tolerance_is_one_voxel(schema):
    g = make_grid((4, 4, 4), spacing=(0.98, 0.98, 3.0))
    assert default_tolerance(g) == 3.0


def test_evaluate_case_levels_and_union(schema, small_phantom):
    _, labels = small_phantom
    jit = perturb_boundary_jitter(labels, schema, seed=3)
    rep = evaluate_case(jit, labels, schema, case_id="c1")
    assert rep.case_id == "c1"
    assert rep.tolerance_mm == default_tolerance(labels.grid)
    present = set(np.unique(labels.labels)) - {0}
    assert set(rep.levels) == present
    for entry in rep.levels.values():
        assert 0.0 <= entry.vol_dice <= 1.0
        assert 0.0 <= entry.surf_dice <= 1.0
        assert entry.hausdorff_mm >= 0.0
    # union pools all foreground: jitter moved labels between levels only,
    # so the union is identical
    assert rep.union.vol_dice == 1.0
    assert rep.union.hausdorff_mm == 0.0


def test_evaluate_case_skips_levels_empty_on_both_sides(schema, small_phantom):
    _, labels = small_phantom
    rep = evaluate_case(labels, labels, schema)
    assert schema.by_name("Ia").id not in rep.levels


def test_evaluate_case_one_sided_level(schema, small_phantom):
    """A level present only in the reference scores zero, with no distance."""
    _, labels = small_phantom
    lid = int(sorted(set(np.unique(labels.labels)) - {0})[0])
    erased = np.array(labels.labels)
    erased[erased == lid] = 0
    pred = label_volume(erased, spacing=labels.grid.spacing_mm)
    rep = evaluate_case(pred, labels, schema)
    entry = rep.levels[lid]
    assert entry.vol_dice == 0.0
    assert entry.surf_dice == 0.0
    assert entry.hausdorff_mm is None


def test_evaluate_case_rejects_bad_labels(schema, small_phantom):
    _, labels = small_phantom
    bad = np.array(labels.labels)
    bad[0, 0, 0] = 99
    with pytest.raises(LabelDomainError):
        evaluate_case(label_volume(bad, spacing=labels.grid.spacing_mm), labels, schema)


def test_evaluate_case_rejects_geometry_mismatch(schema, small_phantom):
    _, labels = small_phantom
    other = label_volume(np.array(labels.labels), spacing=(1.0, 1.0, 2.0))
    with pytest.raises(GeometryMismatchError):
        evaluate_case(other, labels, schema)


def test_report_rows_long_format(schema, small_phantom):
    _, labels = small_phantom
    jit = perturb_boundary_jitter(labels, schema, seed=6)
    rep = evaluate_case(jit, labels, schema, case_id="rows")
    rows = rep.to_rows(schema)
    assert rows[-1]["level"] == "union"
    assert all(set(r) == {"case", "level", "vol_dice", "surf_dice", "hd_max_mm"}
               for r in rows)
    names = [r["level"] for r in rows[:-1]]
    assert names == sorted(names, key=lambda n: schema.by_name(n).id)


# -- agreement with the brute-force route --------------------------------------------

@pytest.mark.parametrize("seed", [0, 1, 2])
def test_fast_metrics_equal_oracle(schema, seed):
    cfg = PhantomConfig(dims=(20, 20, 16), spacing_mm=(0.9, 1.1, 2.7), seed=seed,
                        levels=("II", "III"), slab_slices=5, start_slice=2,
                        ellipse_semiaxes=(8.0, 7.0))
    _, labels = generate_phantom(cfg, schema)
    pred = perturb_boundary_jitter(labels, schema, seed=seed + 50)
    lid = int(sorted(set(np.unique(labels.labels)) - {0})[0])
    pred = perturb_morphological(pred, lid, radius_voxels=1, mode="dilate",
                                 seed=seed).labels
    for tol in (0.5, 1.0, 3.0):
        fast = evaluate_case(pred, labels, schema, tol_mm=tol)
        slow = oracle_metrics(pred, labels, schema, tol_mm=tol)
        assert set(fast.levels) == set(slow.levels)
        for lid2, fe in fast.levels.items():
            se = slow.levels[lid2]
            assert fe.vol_dice == pytest.approx(se.vol_dice, rel=1e-12, abs=1e-15)
            assert fe.surf_dice == pytest.approx(se.surf_dice, rel=1e-12, abs=1e-15)
            if fe.hausdorff_mm is None:
                assert se.hausdorff_mm is None
            else:
                assert fe.hausdorff_mm == pytest.approx(se.hausdorff_mm, rel=1e-12)
        assert fast.union.vol_dice == pytest.approx(slow.union.vol_dice, rel=1e-12)
        assert fast.union.surf_dice == pytest.approx(slow.union.surf_dice, rel=1e-12)
        assert fast.union.hausdorff_mm == pytest.approx(slow.union.hausdorff_mm, rel=1e-12)
