"""Synthetic neck phantoms, controlled perturbations, and brute-force
metric oracles.

Phantoms are geometric stand-ins for planning CTs: an elliptical body
cross-section with craniocaudally stacked level slabs, split left/right.
They are deterministic in (config, seed), so expected voxel counts follow
from the config by arithmetic. The oracle here shares no code with the
fast paths in metrics.py: faces and boundary voxels are found by explicit
neighbor lookups in coordinate sets, distances by all-pairs cdist.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial.distance import cdist

from .errors import SizeGuardError
from .metrics import LevelEntry, MetricReport
from .schema import LevelSchema, default_schema
from .volume_io import ImageVolume, LabelVolume, VoxelGrid

TISSUE_HU = 40
AIR_HU = -1000
TABLE_HU = 200


@dataclass(frozen=True)
class PhantomConfig:
    """Geometry of a synthetic phantom.

    levels are schema names listed cranial to caudal: a bilateral base name
    ("II") instantiates the left/right pair split at lateral_split; a
    midline name fills the whole cross-section. The slab block occupies
    slices [start_slice, start_slice + len(levels)*slab_slices) with the
    first-listed level on top. The patient-left half is the side the
    grid's L direction points into (increasing i for the default axis
    codes).
    """

    dims: tuple[int, int, int] = (32, 32, 32)
    spacing_mm: tuple[float, float, float] = (1.0, 1.0, 3.0)
    seed: int = 0
    levels: tuple[str, ...] = ("II", "III", "IVa")
    slab_slices: int = 8
    start_slice: int = 4
    ellipse_semiaxes: tuple[float, float] = (12.0, 10.0)
    lateral_split: int | None = None
    table: bool = False
    noise_sd_hu: float = 0.0

    def __post_init__(self):
        if any(d < 1 for d in self.dims):
            raise ValueError(f"dims must be positive, got {self.dims}")
        if any(s <= 0 for s in self.spacing_mm):
            raise ValueError(f"spacing_mm must be positive, got {self.spacing_mm}")
        if self.slab_slices < 1:
            raise ValueError(f"slab_slices must be >= 1, got {self.slab_slices}")
        if self.start_slice < 0:
            raise ValueError(f"start_slice must be >= 0, got {self.start_slice}")
        if not self.levels:
            raise ValueError("at least one level required")
        if self.noise_sd_hu < 0:
            raise ValueError(f"noise_sd_hu must be >= 0, got {self.noise_sd_hu}")

    @property
    def split(self) -> int:
        return self.dims[0] // 2 if self.lateral_split is None else self.lateral_split


def ellipse_cross_section(cfg: PhantomConfig) -> np.ndarray:
    """(ny, nx) bool mask of the body ellipse, centered on the grid."""
    nx, ny, _ = cfg.dims
    a, b = cfg.ellipse_semiaxes
    cx, cy = (nx - 1) / 2.0, (ny - 1) / 2.0
    jj, ii = np.mgrid[0:ny, 0:nx]
    return ((ii - cx) / a) ** 2 + ((jj - cy) / b) ** 2 <= 1.0


def generate_phantom(
    cfg: PhantomConfig, schema: LevelSchema | None = None
) -> tuple[ImageVolume, LabelVolume]:
    """Deterministic phantom pair (CT image, slice-consistent labels)."""
    schema = schema or default_schema()
    nx, ny, nz = cfg.dims
    end = cfg.start_slice + len(cfg.levels) * cfg.slab_slices
    if end > nz:
        raise ValueError(
            f"config infeasible: slabs end at slice {end}, volume has {nz} slices"
        )

    names = {l.name for l in schema.levels}
    ellipse = ellipse_cross_section(cfg)
    left_region = ellipse.copy()
    left_region[:, : cfg.split] = False
    right_region = ellipse & ~left_region
    if not left_region.any() or not right_region.any():
        raise ValueError("config infeasible: lateral split leaves an empty side")

    cross_sections: list[np.ndarray] = []
    for name in cfg.levels:
        if name in names:
            section = ellipse.astype(np.uint8) * schema.by_name(name).id
        elif f"{name}_left" in names and f"{name}_right" in names:
            section = np.zeros((ny, nx), dtype=np.uint8)
            section[left_region] = schema.by_name(f"{name}_left").id
            section[right_region] = schema.by_name(f"{name}_right").id
        else:
            raise ValueError(f"unknown level {name!r} for schema {schema.schema_id!r}")
        cross_sections.append(section)

    # cfg.levels reads cranial to caudal: the first level gets the top slab
    labels = np.zeros((nz, ny, nx), dtype=np.uint8)
    for idx, section in enumerate(reversed(cross_sections)):
        k0 = cfg.start_slice + idx * cfg.slab_slices
        labels[k0 : k0 + cfg.slab_slices] = section

    # Image: soft-tissue ellipsoid in air, independent of the label slabs.
    cx, cy, cz = (nx - 1) / 2.0, (ny - 1) / 2.0, (nz - 1) / 2.0
    a, b = cfg.ellipse_semiaxes
    kk, jj, ii = np.mgrid[0:nz, 0:ny, 0:nx]
    body = (
        ((ii - cx) / (a + 2.0)) ** 2
        + ((jj - cy) / (b + 2.0)) ** 2
        + ((kk - cz) / max(nz / 2.0 - 1.0, 1.0)) ** 2
        <= 1.0
    )
    image = np.where(body, TISSUE_HU, AIR_HU).astype(np.float64)
    if cfg.table:
        # Detached flat slab posterior to the body (larger j), full x/z extent.
        image[:, ny - 3 : ny - 1, :] = TABLE_HU
    if cfg.noise_sd_hu > 0:
        rng = np.random.default_rng(cfg.seed)
        image = image + rng.normal(0.0, cfg.noise_sd_hu, size=image.shape)
    image = np.rint(image).astype(np.int16)

    grid = VoxelGrid(dims=cfg.dims, spacing_mm=cfg.spacing_mm)
    return (
        ImageVolume(grid=grid, voxels=image),
        LabelVolume(grid=grid, labels=labels, schema_id=schema.schema_id),
    )


def perturb_boundary_jitter(
    labels: LabelVolume,
    schema: LevelSchema,
    max_shift_slices: int = 1,
    seed: int = 0,
    column_fraction: float = 0.125,
) -> LabelVolume:
    """Displace level-to-level boundaries column-wise by up to +-max_shift.

    For every craniocaudal boundary between two non-background labels,
    a fixed fraction of its columns (rounded, chosen per boundary and
    label pair so the perturbation load is even) is shifted by a random
    nonzero offset in [-max_shift, max_shift]. Level-to-background
    boundaries are left alone. Deterministic per seed; voxels change only
    within max_shift slices of an original boundary.
    """
    if max_shift_slices < 1:
        raise ValueError(f"max_shift_slices must be >= 1, got {max_shift_slices}")
    if not 0 < column_fraction <= 0.3:
        # above ~1/3 the per-slice majority can flip and Phase A would no
        # longer restore the reference; keep the generator in safe range
        raise ValueError(f"column_fraction must be in (0, 0.3], got {column_fraction}")
    arr = labels.labels.copy()
    nz = arr.shape[0]
    bg = schema.background_id
    below = arr[:-1]
    above = arr[1:]
    trans = (below != above) & (below != bg) & (above != bg)
    candidates = np.argwhere(trans)  # rows (k, j, i), C-order sorted

    groups: dict[tuple[int, int, int], list[tuple[int, int]]] = {}
    for k, j, i in candidates:
        key = (int(k), int(arr[k, j, i]), int(arr[k + 1, j, i]))
        groups.setdefault(key, []).append((int(j), int(i)))

    rng = np.random.default_rng(seed)
    for (k, below_id, above_id) in sorted(groups):
        columns = groups[(k, below_id, above_id)]
        n_flip = int(round(column_fraction * len(columns)))
        if n_flip == 0:
            continue
        chosen = rng.choice(len(columns), size=n_flip, replace=False)
        for c in np.sort(chosen):
            j, i = columns[int(c)]
            magnitude = int(rng.integers(1, max_shift_slices + 1))
            if rng.integers(0, 2) == 1:
                hi = min(k + 1 + magnitude, nz)
                arr[k + 1 : hi, j, i] = below_id
            else:
                lo = max(k + 1 - magnitude, 0)
                arr[lo : k + 1, j, i] = above_id
    return LabelVolume(grid=labels.grid, labels=arr, schema_id=labels.schema_id)


@dataclass(frozen=True)
class MorphResult:
    labels: LabelVolume
    annihilated: bool


def perturb_morphological(
    labels: LabelVolume,
    level_id: int,
    radius_voxels: int,
    mode: str,
    seed: int = 0,
) -> MorphResult:
    """Erode or dilate one level by a 6-connected ball of the given radius.

    Dilation claims only background voxels, never other levels. The
    operation is deterministic; seed is accepted for interface symmetry
    with the other perturbations. annihilated flags an erosion that
    removed the level entirely.
    """
    if mode not in ("erode", "dilate"):
        raise ValueError(f"mode must be erode|dilate, got {mode!r}")
    if radius_voxels < 0:
        raise ValueError(f"radius_voxels must be >= 0, got {radius_voxels}")
    arr = labels.labels.copy()
    mask = arr == level_id
    if not mask.any():
        raise ValueError(f"level {level_id} is empty in this volume")
    if radius_voxels == 0:
        return MorphResult(labels=labels, annihilated=False)

    structure = ndimage.generate_binary_structure(3, 1)
    if mode == "dilate":
        grown = ndimage.binary_dilation(mask, structure=structure, iterations=radius_voxels)
        claim = grown & (arr == 0) & ~mask
        arr[claim] = level_id
        annihilated = False
    else:
        shrunk = ndimage.binary_erosion(mask, structure=structure,
                                        iterations=radius_voxels, border_value=0)
        arr[mask & ~shrunk] = 0
        annihilated = not shrunk.any()
    out = LabelVolume(grid=labels.grid, labels=arr, schema_id=labels.schema_id)
    return MorphResult(labels=out, annihilated=annihilated)


# ---------------------------------------------------------------------------
# brute-force oracle

ORACLE_DIM_LIMIT = 64


def _voxel_set(mask: np.ndarray) -> set[tuple[int, int, int]]:
    return {tuple(int(v) for v in row) for row in np.argwhere(mask)}

_SIX_NEIGHBORS = (
    (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1),
)


def _oracle_faces(vox: set[tuple[int, int, int]], spacing_zyx) -> tuple[np.ndarray, np.ndarray]:
    """All foreground/background faces by explicit neighbor lookup.

    Face centers use the same coordinate convention as the fast path
    ((face index - 0.5) * spacing on the normal axis, voxel centers at
    index * spacing elsewhere) so equal geometry gives equal distances.
    """
    sz, sy, sx = (float(s) for s in spacing_zyx)
    centers: list[tuple[float, float, float]] = []
    areas: list[float] = []
    area_for_axis = {0: sy * sx, 1: sz * sx, 2: sz * sy}
    for (k, j, i) in sorted(vox):
        for dk, dj, di in _SIX_NEIGHBORS:
            if (k + dk, j + dj, i + di) in vox:
                continue
            if dk != 0:
                f = k + 1 if dk > 0 else k
                centers.append(((f - 0.5) * sz, j * sy, i * sx))
                areas.append(area_for_axis[0])
            elif dj != 0:
                f = j + 1 if dj > 0 else j
                centers.append((k * sz, (f - 0.5) * sy, i * sx))
                areas.append(area_for_axis[1])
            else:
                f = i + 1 if di > 0 else i
                centers.append((k * sz, j * sy, (f - 0.5) * sx))
                areas.append(area_for_axis[2])
    return np.asarray(centers, dtype=np.float64), np.asarray(areas, dtype=np.float64)


def _oracle_boundary_centers(vox: set[tuple[int, int, int]], spacing_zyx) -> np.ndarray:
    sz, sy, sx = (float(s) for s in spacing_zyx)
    pts = [
        (k * sz, j * sy, i * sx)
        for (k, j, i) in sorted(vox)
        if any((k + dk, j + dj, i + di) not in vox for dk, dj, di in _SIX_NEIGHBORS)
    ]
    return np.asarray(pts, dtype=np.float64)


def _oracle_entry(a: np.ndarray, b: np.ndarray, spacing_zyx, tol_mm: float) -> LevelEntry:
    sa, sb = _voxel_set(a), _voxel_set(b)

    if not sa and not sb:
        vol = 1.0
    else:
        inter = len(sa & sb)
        vol = 2.0 * inter / (len(sa) + len(sb))

    if not sa and not sb:
        surf = 1.0
    elif not sa or not sb:
        surf = 0.0
    else:
        ca, wa = _oracle_faces(sa, spacing_zyx)
        cb, wb = _oracle_faces(sb, spacing_zyx)
        d_ab = cdist(ca, cb).min(axis=1)
        d_ba = cdist(cb, ca).min(axis=1)
        surf = float(wa[d_ab <= tol_mm].sum() + wb[d_ba <= tol_mm].sum()) / float(
            wa.sum() + wb.sum()
        )

    if sa and sb:
        pa = _oracle_boundary_centers(sa, spacing_zyx)
        pb = _oracle_boundary_centers(sb, spacing_zyx)
        d = cdist(pa, pb)
        hd = float(max(d.min(axis=1).max(), d.min(axis=0).max()))
    else:
        hd = None
    return LevelEntry(vol_dice=vol, surf_dice=surf, hausdorff_mm=hd)


def oracle_metrics(
    pred: LabelVolume,
    ref: LabelVolume,
    schema: LevelSchema,
    tol_mm: float,
    case_id: str = "",
) -> MetricReport:
    """All-pairs O(n^2) reference metrics; guard-railed to <= 64^3 volumes."""
    if any(d > ORACLE_DIM_LIMIT for d in pred.grid.dims):
        raise SizeGuardError(
            f"oracle limited to {ORACLE_DIM_LIMIT}^3, got dims {pred.grid.dims}"
        )
    sx, sy, sz = pred.grid.spacing_mm
    spacing_zyx = (sz, sy, sx)
    report = MetricReport(case_id=case_id, tolerance_mm=float(tol_mm))
    for level_id in schema.level_ids:
        a = pred.labels == level_id
        b = ref.labels == level_id
        if not a.any() and not b.any():
            continue
        report.levels[level_id] = _oracle_entry(a, b, spacing_zyx, tol_mm)
    report.union = _oracle_entry(
        pred.labels != schema.background_id,
        ref.labels != schema.background_id,
        spacing_zyx,
        tol_mm,
    )
    return report
