"""Geometric accuracy metrics: volumetric Dice, surface Dice at tolerance,
and maximum Hausdorff distance, per level and for the all-level union.

Masks are boolean arrays in the k-major (nz, ny, nx) layout. Surfaces are
voxel-face surfels: the faces between a foreground and a background voxel
(the volume edge counts as background), each weighted by its physical area
and located at its center, with voxel centers at index * spacing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import LabelDomainError, UndefinedMetricError
from .schema import LevelSchema
from .volume_io import LabelVolume, VoxelGrid, require_compatible


def default_tolerance(grid: VoxelGrid) -> float:
    """The "one voxel" surface-dice tolerance: the largest spacing component."""
    return float(max(grid.spacing_mm))


def _check_shapes(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise UndefinedMetricError(f"mask shapes differ: {a.shape} vs {b.shape}")


def volumetric_dice(a: np.ndarray, b: np.ndarray) -> float:
    """2|A n B| / (|A| + |B|); defined as 1.0 when both masks are empty."""
    _check_shapes(a, b)
    na = int(np.count_nonzero(a))
    nb = int(np.count_nonzero(b))
    if na == 0 and nb == 0:
        return 1.0
    inter = int(np.count_nonzero(a & b))
    return 2.0 * inter / (na + nb)


def boundary_faces(mask: np.ndarray, spacing_zyx: tuple[float, float, float]):
    """Face centers (N, 3) in (z, y, x) mm and face areas (N,) in mm^2.

    A face exists wherever foreground meets background along one of the
    three axes; faces on the volume edge are included. The center of the
    face between voxels f-1 and f along an axis lies at (f - 0.5) * spacing
    on that axis and at the voxel-center coordinate on the other two.
    """
    centers = []
    areas = []
    spacing = np.asarray(spacing_zyx, dtype=np.float64)
    for axis in range(3):
        pad = [(0, 0)] * 3
        pad[axis] = (1, 1)
        padded = np.pad(mask, pad)
        hi = tuple(slice(1, None) if ax == axis else slice(None) for ax in range(3))
        lo = tuple(slice(None, -1) if ax == axis else slice(None) for ax in range(3))
        idx = np.argwhere(padded[hi] != padded[lo]).astype(np.float64)
        coords = idx * spacing
        coords[:, axis] = (idx[:, axis] - 0.5) * spacing[axis]
        centers.append(coords)
        area = float(np.prod(np.delete(spacing, axis)))
        areas.append(np.full(len(coords), area))
    return np.concatenate(centers), np.concatenate(areas)


def surface_dice(a: np.ndarray, b: np.ndarray, grid: VoxelGrid, tol_mm: float) -> float:
    """Area fraction of the two boundaries lying within tol_mm of each other.

    (area of A's faces within tol of B's surface + area of B's faces within
    tol of A's surface) / (total face area of A + B), distances Euclidean
    in mm between face centers. Both masks empty -> 1.0; exactly one empty
    -> 0.0.
    """
    _check_shapes(a, b)
    if tol_mm < 0:
        raise ValueError(f"tol_mm must be >= 0, got {tol_mm}")
    empty_a = not a.any()
    empty_b = not b.any()
    if empty_a and empty_b:
        return 1.0
    if empty_a or empty_b:
        return 0.0
    sx, sy, sz = grid.spacing_mm
    spacing_zyx = (sz, sy, sx)
    ca, wa = boundary_faces(a, spacing_zyx)
    cb, wb = boundary_faces(b, spacing_zyx)
    da = cKDTree(cb).query(ca, k=1)[0]
    db = cKDTree(ca).query(cb, k=1)[0]
    overlap = float(wa[da <= tol_mm].sum() + wb[db <= tol_mm].sum())
    return overlap / float(wa.sum() + wb.sum())


def boundary_voxels(mask: np.ndarray) -> np.ndarray:
    """Mask of foreground voxels with a 6-neighbor outside the foreground
    (the volume edge counts as outside)."""
    if not mask.any():
        return np.zeros_like(mask, dtype=bool)
    interior = ndimage.binary_erosion(
        mask, structure=ndimage.generate_binary_structure(3, 1), border_value=0
    )
    return mask & ~interior


def hausdorff_max(a: np.ndarray, b: np.ndarray, grid: VoxelGrid) -> float:
    """Symmetric maximum Hausdorff distance between boundary-voxel centers, mm."""
    _check_shapes(a, b)
    if not a.any() or not b.any():
        raise UndefinedMetricError("hausdorff_max undefined for an empty mask")
    # Crop to the union bounding box; all boundary voxels of both masks lie
    # inside it, so distances are unchanged and the EDT grid stays small.
    union = a | b
    kk, jj, ii = np.nonzero(union)
    sl = tuple(slice(int(x.min()), int(x.max()) + 1) for x in (kk, jj, ii))
    ac, bc = a[sl], b[sl]
    sx, sy, sz = grid.spacing_mm
    sampling = (sz, sy, sx)
    ba = boundary_voxels(ac)
    bb = boundary_voxels(bc)
    dt_b = ndimage.distance_transform_edt(~bb, sampling=sampling)
    dt_a = ndimage.distance_transform_edt(~ba, sampling=sampling)
    return float(max(dt_b[ba].max(), dt_a[bb].max()))


@dataclass(frozen=True)
class LevelEntry:
    """Metrics for one level (or the union). hausdorff_mm is None when one
    side is empty and the distance is undefined."""

    vol_dice: float
    surf_dice: float
    hausdorff_mm: float | None


@dataclass
class MetricReport:
    case_id: str
    tolerance_mm: float
    levels: dict[int, LevelEntry] = field(default_factory=dict)
    union: LevelEntry | None = None

    def to_rows(self, schema: LevelSchema | None = None) -> list[dict]:
        """Long-format rows: case, level, vol_dice, surf_dice, hd_max_mm."""
        rows = []
        for level_id in sorted(self.levels):
            e = self.levels[level_id]
            name = schema.by_id(level_id).name if schema else str(level_id)
            rows.append(
                {
                    "case": self.case_id,
                    "level": name,
                    "vol_dice": e.vol_dice,
                    "surf_dice": e.surf_dice,
                    "hd_max_mm": e.hausdorff_mm,
                }
            )
        if self.union is not None:
            rows.append(
                {
                    "case": self.case_id,
                    "level": "union",
                    "vol_dice": self.union.vol_dice,
                    "surf_dice": self.union.surf_dice,
                    "hd_max_mm": self.union.hausdorff_mm,
                }
            )
        return rows


def _entry(a: np.ndarray, b: np.ndarray, grid: VoxelGrid, tol_mm: float) -> LevelEntry:
    vol = volumetric_dice(a, b)
    surf = surface_dice(a, b, grid, tol_mm)
    if a.any() and b.any():
        hd = hausdorff_max(a, b, grid)
    else:
        hd = None
    return LevelEntry(vol_dice=vol, surf_dice=surf, hausdorff_mm=hd)


def _check_label_domain(vol: LabelVolume, schema: LevelSchema) -> None:
    known = set(schema.level_ids) | {schema.background_id}
    present = np.unique(vol.labels)
    unknown = [int(v) for v in present if int(v) not in known]
    if unknown:
        raise LabelDomainError(f"label ids {unknown} not declared in schema {schema.schema_id!r}")


def evaluate_case(
    pred: LabelVolume,
    ref: LabelVolume,
    schema: LevelSchema,
    tol_mm: float | None = None,
    case_id: str = "",
) -> MetricReport:
    """All three metrics for every level and for the all-level union.

    Levels empty in both volumes are omitted from the report. tol_mm
    defaults to the one-voxel tolerance for the grid.
    """
    require_compatible(pred, ref)
    if pred.schema_id != schema.schema_id or ref.schema_id != schema.schema_id:
        raise ValueError(
            f"schema mismatch: volumes tagged {pred.schema_id!r}/{ref.schema_id!r}, "
            f"schema is {schema.schema_id!r}"
        )
    _check_label_domain(pred, schema)
    _check_label_domain(ref, schema)
    if tol_mm is None:
        tol_mm = default_tolerance(pred.grid)

    report = MetricReport(case_id=case_id, tolerance_mm=float(tol_mm))
    for level_id in schema.level_ids:
        a = pred.labels == level_id
        b = ref.labels == level_id
        if not a.any() and not b.any():
            continue
        report.levels[level_id] = _entry(a, b, pred.grid, tol_mm)
    union_a = pred.labels != schema.background_id
    union_b = ref.labels != schema.background_id
    report.union = _entry(union_a, union_b, pred.grid, tol_mm)
    return report
