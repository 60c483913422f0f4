"""Synthetic phantoms, controlled perturbations, and the brute-force
metric oracle (validated here against hand arithmetic)."""

import numpy as np
import pytest

from levelqa.errors import SizeGuardError
from levelqa.metrics import evaluate_case
from levelqa.phantom import (
    AIR_HU,
    TISSUE_HU,
    PhantomConfig,
    ellipse_cross_section,
    generate_phantom,
    oracle_metrics,
    perturb_boundary_jitter,
    perturb_morphological,
)
from levelqa.postprocess import (
    SliceAdjustConfig,
    slice_consistency_violations,
    slice_plane_adjust,
)

from conftest import label_volume


# -- generation ------------------------------------------------------------------

def test_phantom_is_deterministic(schema):
    cfg = PhantomConfig(seed=4, noise_sd_hu=25.0)
    i1, l1 = generate_phantom(cfg, schema)
    i2, l2 = generate_phantom(cfg, schema)
    assert np.array_equal(i1.voxels, i2.voxels)
    assert np.array_equal(l1.labels, l2.labels)


def test_phantom_slab_geometry(schema):
    cfg = PhantomConfig(seed=0)  # levels II, III, IVa; 8 slices each from k=4
    _, lab = generate_phantom(cfg, schema)
    arr = lab.labels
    ii_l, ii_r = schema.by_name("II_left").id, schema.by_name("II_right").id
    iii_l = schema.by_name("III_left").id
    # slab order is craniocaudal: II on top
    top = set(np.unique(arr[20:28])) - {0}
    assert top == {ii_l, ii_r}
    mid = set(np.unique(arr[12:20])) - {0}
    assert mid == {schema.by_name("III_left").id, schema.by_name("III_right").id}
    bottom = set(np.unique(arr[4:12])) - {0}
    assert bottom == {schema.by_name("IVa_left").id, schema.by_name("IVa_right").id}
    assert not (arr[:4] != 0).any() and not (arr[28:] != 0).any()
    # laterality: patient-left labels in the i >= split half
    split = cfg.split
    left_cols = arr[:, :, split:]
    right_cols = arr[:, :, :split]
    assert ii_l in left_cols and ii_l not in right_cols
    assert ii_r in right_cols and ii_r not in left_cols
    assert iii_l in left_cols and iii_l not in right_cols


def test_phantom_labels_inside_ellipse(schema):
    cfg = PhantomConfig(seed=0)
    _, lab = generate_phantom(cfg, schema)
    inside = ellipse_cross_section(cfg)
    outside_cols = lab.labels[:, ~inside]
    assert not outside_cols.any()


def test_phantom_image_has_body_and_air(schema):
    cfg = PhantomConfig(seed=0, table=True)
    img, _ = generate_phantom(cfg, schema)
    vals = set(np.unique(img.voxels))
    assert float(AIR_HU) in vals and float(TISSUE_HU) in vals
    assert img.voxels[0, 0, 0] == AIR_HU  # corner is air


def test_phantom_midline_levels_span_width(schema):
    cfg = PhantomConfig(seed=0, levels=("Ia", "VIa"), slab_slices=6, start_slice=4)
    _, lab = generate_phantom(cfg, schema)
    ia = schema.by_name("Ia").id
    occupied = np.argwhere(lab.labels == ia)
    assert occupied.size
    # a midline level is not split: it appears on both sides of the midline
    assert occupied[:, 2].min() < cfg.split <= occupied[:, 2].max()


def test_phantom_infeasible_configs_rejected(schema):
    with pytest.raises(ValueError):
        generate_phantom(
            PhantomConfig(dims=(16, 16, 8), levels=("II", "III", "IVa"),
                          slab_slices=8, start_slice=0), schema
        )
    with pytest.raises(ValueError):
        PhantomConfig(dims=(0, 16, 16))
    with pytest.raises(ValueError):
        PhantomConfig(spacing_mm=(1.0, -1.0, 3.0))


# -- boundary jitter ---------------------------------------------------------------

def test_jitter_is_deterministic(schema, small_phantom):
    _, lab = small_phantom
    a = perturb_boundary_jitter(lab, schema, seed=12)
    b = perturb_boundary_jitter(lab, schema, seed=12)
    assert np.array_equal(a.labels, b.labels)
    c = perturb_boundary_jitter(lab, schema, seed=13)
    assert not np.array_equal(a.labels, c.labels)


def test_jitter_touches_only_level_level_boundaries(schema, small_phantom):
    _, lab = small_phantom
    jit = perturb_boundary_jitter(lab, schema, seed=1)
    changed = jit.labels != lab.labels
    assert changed.any()
    # background is involved in no change, in either direction
    assert not (lab.labels[changed] == 0).any()
    assert not (jit.labels[changed] == 0).any()
    # the union footprint is exactly preserved
    assert np.array_equal(jit.labels != 0, lab.labels != 0)


def test_jitter_stays_within_shift_of_boundaries(schema, small_phantom):
    _, lab = small_phantom
    for shift in (1, 2):
        jit = perturb_boundary_jitter(lab, schema, max_shift_slices=shift, seed=2)
        ks = np.unique(np.argwhere(jit.labels != lab.labels)[:, 0])
        boundaries = {12, 20}  # slab interfaces of the default phantom
        for k in ks:
            assert any(b - shift <= k <= b + shift - 1 or b - shift + 1 <= k <= b + shift
                       for b in boundaries)


def test_jitter_creates_violations_adjust_restores_exactly(schema):
    """The headline regression: jitter breaks slice consistency, the
    adjustment removes every violation and reproduces the original."""
    for seed in (0, 1, 2, 3):
        _, lab = generate_phantom(PhantomConfig(seed=seed), schema)
        jit = perturb_boundary_jitter(lab, schema, seed=seed + 100)
        assert slice_consistency_violations(jit, schema)
        fixed, report = slice_plane_adjust(jit, schema, SliceAdjustConfig())
        assert slice_consistency_violations(fixed, schema) == []
        assert np.array_equal(fixed.labels, lab.labels)
        assert not report.background_clears


def test_jitter_dice_regression(schema):
    """Frozen per-level Dice of the jittered middle level at seed 7."""
    _, lab = generate_phantom(PhantomConfig(seed=7), schema)
    jit = perturb_boundary_jitter(lab, schema, seed=7)
    rep = evaluate_case(jit, lab, schema)
    iii_l = schema.by_name("III_left").id
    # middle slab: both its boundaries jittered; drop stays under 2/h
    assert 0.96 <= rep.levels[iii_l].vol_dice < 1.0
    for entry in rep.levels.values():
        assert entry.vol_dice >= 0.96


def test_jitter_parameter_validation(schema, small_phantom):
    _, lab = small_phantom
    with pytest.raises(ValueError):
        perturb_boundary_jitter(lab, schema, max_shift_slices=0)
    with pytest.raises(ValueError):
        perturb_boundary_jitter(lab, schema, column_fraction=0.0)
    with pytest.raises(ValueError):
        perturb_boundary_jitter(lab, schema, column_fraction=0.5)


# -- morphological perturbation ------------------------------------------------------

def test_morph_dilate_grows_only_into_background(schema, small_phantom):
    _, lab = small_phantom
    lid = schema.by_name("III_left").id
    res = perturb_morphological(lab, lid, radius_voxels=1, mode="dilate")
    before = (lab.labels == lid).sum()
    after = (res.labels.labels == lid).sum()
    assert after > before
    stolen = (lab.labels != 0) & (lab.labels != lid) & (res.labels.labels == lid)
    assert not stolen.any()
    assert not res.annihilated


def test_morph_erode_shrinks(schema, small_phantom):
    _, lab = small_phantom
    lid = schema.by_name("III_left").id
    res = perturb_morphological(lab, lid, radius_voxels=1, mode="erode")
    assert (res.labels.labels == lid).sum() < (lab.labels == lid).sum()
    # eroded voxels become background
    gone = (lab.labels == lid) & (res.labels.labels != lid)
    assert (res.labels.labels[gone] == 0).all()


def test_morph_erode_to_annihilation(schema):
    lid = 7
    arr = np.zeros((5, 8, 8), dtype=np.uint8)
    arr[2, 3:5, 3:5] = lid  # 2x2x1 patch dies under radius-1 erosion
    res = perturb_morphological(label_volume(arr), lid, radius_voxels=1, mode="erode")
    assert res.annihilated
    assert not (res.labels.labels == lid).any()


def test_morph_radius_zero_is_identity(schema, small_phantom):
    _, lab = small_phantom
    lid = schema.by_name("II_right").id
    res = perturb_morphological(lab, lid, radius_voxels=0, mode="dilate")
    assert np.array_equal(res.labels.labels, lab.labels)


def test_morph_missing_level_rejected(schema, small_phantom):
    _, lab = small_phantom
    with pytest.raises(ValueError):
        perturb_morphological(lab, schema.by_name("VIII_left").id, 1, "erode")


# -- oracle self-validation -----------------------------------------------------------

def test_oracle_hand_case_single_voxel_pair(schema):
    """Oracle vs hand arithmetic on two unit voxels 2 apart (spacing 1)."""
    lid = schema.by_name("II_left").id
    a = np.zeros((3, 3, 5), dtype=np.uint8)
    b = np.zeros((3, 3, 5), dtype=np.uint8)
    a[1, 1, 0] = lid
    b[1, 1, 2] = lid
    rep = oracle_metrics(label_volume(a), label_volume(b), schema, tol_mm=1.0)
    entry = rep.levels[lid]
    assert entry.vol_dice == 0.0
    # only the two facing faces (1 mm apart) are within tolerance: 2/12
    assert entry.surf_dice == pytest.approx(2.0 / 12.0, abs=1e-15)
    assert entry.hausdorff_mm == 2.0


def test_oracle_hand_case_identical(schema):
    lid = schema.by_name("Ia").id
    a = np.zeros((3, 4, 4), dtype=np.uint8)
    a[1, 1:3, 1:3] = lid
    rep = oracle_metrics(label_volume(a), label_volume(a), schema, tol_mm=0.5)
    entry = rep.levels[lid]
    assert entry.vol_dice == 1.0
    assert entry.surf_dice == 1.0
    assert entry.hausdorff_mm == 0.0


def test_oracle_hand_case_anisotropic(schema):
    lid = schema.by_name("VIa").id
    a = np.zeros((4, 3, 3), dtype=np.uint8)
    b = np.zeros((4, 3, 3), dtype=np.uint8)
    a[1, 1, 1] = lid
    b[2, 1, 1] = lid  # one slice apart, 3 mm spacing
    rep = oracle_metrics(
        label_volume(a, spacing=(1.0, 1.0, 3.0)),
        label_volume(b, spacing=(1.0, 1.0, 3.0)),
        schema, tol_mm=3.0,
    )
    entry = rep.levels[lid]
    assert entry.hausdorff_mm == 3.0
    # at 3 mm every face of one voxel reaches the other: z-faces pair at
    # distance 3, lateral faces pair within sqrt(3^2)=3 of each other? No:
    # lateral face centers differ by exactly 3 mm along z only.
    assert entry.surf_dice == 1.0


def test_oracle_refuses_large_volumes(schema):
    arr = np.zeros((65, 4, 4), dtype=np.uint8)
    with pytest.raises(SizeGuardError):
        oracle_metrics(label_volume(arr), label_volume(arr), schema, tol_mm=1.0)


def test_oracle_union_matches_fast_on_phantom(schema):
    cfg = PhantomConfig(dims=(18, 18, 14), seed=5, levels=("II",),
                        slab_slices=6, start_slice=3, ellipse_semiaxes=(7.0, 6.0))
    _, lab = generate_phantom(cfg, schema)
    pred = perturb_boundary_jitter(lab, schema, seed=5)
    fast = evaluate_case(pred, lab, schema, tol_mm=1.0)
    slow = oracle_metrics(pred, lab, schema, tol_mm=1.0)
    assert fast.union.vol_dice == pytest.approx(slow.union.vol_dice, rel=1e-12)
    assert fast.union.surf_dice == pytest.approx(slow.union.surf_dice, rel=1e-12)
    assert fast.union.hausdorff_mm == pytest.approx(slow.union.hausdorff_mm, rel=1e-12)
