"""Standardized input-volume preparation: ROI cropping, Otsu-based
foreground masking (removes immobilization mask and table), and mirroring
augmentation with left/right label swap."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DegenerateInputError, RangeError
from .schema import LevelSchema
from .volume_io import ImageVolume, LabelVolume, VoxelGrid, require_compatible

MASK_SCHEMA_ID = "binary-mask"
DEFAULT_FILL_HU = -1024.0


@dataclass(frozen=True)
class OtsuMaskParams:
    """Parameters of the seven-step masking pipeline (see foreground_mask_otsu)."""

    percentile_clip: float = 0.01
    threshold_correction: float = 0.3
    closing_size_voxels: int = 9
    dilate_size_voxels: int = 2

    def __post_init__(self):
        if not 0 <= self.percentile_clip < 0.5:
            raise ValueError(f"percentile_clip must be in [0, 0.5), got {self.percentile_clip}")
        if self.threshold_correction <= 0:
            raise ValueError(f"threshold_correction must be > 0, got {self.threshold_correction}")
        if self.closing_size_voxels < 1 or self.closing_size_voxels % 2 == 0:
            raise ValueError(f"closing_size_voxels must be odd >= 1, got {self.closing_size_voxels}")
        if self.dilate_size_voxels < 0:
            raise ValueError(f"dilate_size_voxels must be >= 0, got {self.dilate_size_voxels}")


@dataclass(frozen=True)
class CropBox:
    """Half-open voxel index box, (i, j, k) order."""

    mins: tuple[int, int, int]
    maxs: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "mins", tuple(int(v) for v in self.mins))
        object.__setattr__(self, "maxs", tuple(int(v) for v in self.maxs))
        if any(lo >= hi for lo, hi in zip(self.mins, self.maxs)):
            raise ValueError(f"empty box: mins {self.mins}, maxs {self.maxs}")

    def extents(self) -> tuple[int, int, int]:
        return tuple(hi - lo for lo, hi in zip(self.mins, self.maxs))


def crop_to_box(volume, box: CropBox):
    """Crop an image or label volume to a voxel box.

    The origin moves to the world position of the box's min corner, so
    cropped volumes stay aligned with the original in world space.
    """
    grid = volume.grid
    for axis in range(3):
        if box.mins[axis] < 0 or box.maxs[axis] > grid.dims[axis]:
            raise RangeError(
                f"box out of bounds on axis {axis}: "
                f"[{box.mins[axis]}, {box.maxs[axis]}) vs dim {grid.dims[axis]}"
            )
    (i0, j0, k0), (i1, j1, k1) = box.mins, box.maxs
    origin = np.asarray(grid.origin_mm, dtype=np.float64)
    for axis, lo in enumerate(box.mins):
        origin = origin + grid.direction(axis) * (lo * grid.spacing_mm[axis])
    new_grid = VoxelGrid(
        dims=box.extents(),
        spacing_mm=grid.spacing_mm,
        origin_mm=tuple(float(v) for v in origin),
        axis_codes=grid.axis_codes,
    )
    if isinstance(volume, LabelVolume):
        data = volume.labels[k0:k1, j0:j1, i0:i1]
        return LabelVolume(grid=new_grid, labels=np.ascontiguousarray(data),
                           schema_id=volume.schema_id)
    data = volume.voxels[k0:k1, j0:j1, i0:i1]
    return ImageVolume(grid=new_grid, voxels=np.ascontiguousarray(data))


def corrected_otsu_threshold(image: ImageVolume, params: OtsuMaskParams) -> float:
    """Corrected Otsu threshold on the percentile-clipped histogram.

    Intensities are clipped at the percentile_clip and 1 - percentile_clip
    quantiles, Otsu's threshold t* is found on a 256-bin histogram of the
    clipped values, and the returned threshold is pulled toward the
    clipped minimum: t = low + threshold_correction * (t* - low). A factor
    below 1 lowers the threshold and enlarges the foreground.
    """
    vals = image.voxels.astype(np.float64, copy=False).ravel()
    lo = float(np.quantile(vals, params.percentile_clip))
    hi = float(np.quantile(vals, 1.0 - params.percentile_clip))
    if not lo < hi:
        raise DegenerateInputError(
            f"constant image after clipping: quantile range [{lo}, {hi}]"
        )
    clipped = np.clip(vals, lo, hi)
    hist, edges = np.histogram(clipped, bins=256, range=(lo, hi))

    # Otsu: maximize between-class variance over the 255 interior splits.
    counts = hist.astype(np.float64)
    total = counts.sum()
    centers = (edges[:-1] + edges[1:]) / 2.0
    w0 = np.cumsum(counts)
    sum0 = np.cumsum(counts * centers)
    w1 = total - w0
    mu0 = np.divide(sum0, w0, out=np.zeros_like(sum0), where=w0 > 0)
    mu1 = np.divide(sum0[-1] - sum0, w1, out=np.zeros_like(sum0), where=w1 > 0)
    between = w0 * w1 * (mu0 - mu1) ** 2
    valid = (w0 > 0) & (w1 > 0)
    if not valid[:-1].any():
        raise DegenerateInputError("all intensities fall into a single histogram bin")
    split = int(np.argmax(np.where(valid, between, -np.inf)[:-1]))
    t_star = float(edges[split + 1])
    return lo + params.threshold_correction * (t_star - lo)


def foreground_mask_otsu(image: ImageVolume, params: OtsuMaskParams | None = None) -> LabelVolume:
    """Binary foreground mask of the patient, excluding detached structures.

    Pipeline: percentile clip, 256-bin Otsu with correction factor,
    binarize >= t, keep the largest face-connected 3D component (drops the
    table and mask holder), close with a cubic element of edge
    closing_size_voxels, then dilate dilate_size_voxels times. The mask is
    returned as a 0/1 label volume on the same grid.
    """
    params = params or OtsuMaskParams()
    t = corrected_otsu_threshold(image, params)
    fg = image.voxels >= t
    if not fg.any():
        raise DegenerateInputError(f"threshold {t:.1f} leaves no foreground")

    structure6 = ndimage.generate_binary_structure(3, 1)
    comp, n = ndimage.label(fg, structure=structure6)
    if n > 1:
        sizes = np.bincount(comp.ravel())
        sizes[0] = 0
        fg = comp == int(np.argmax(sizes))

    s = params.closing_size_voxels
    if s > 1:
        cube = np.ones((s, s, s), dtype=bool)
        # Closing that stays extensive at the volume edge: dilate with the
        # outside treated as background, erode with it treated as foreground.
        dilated = ndimage.binary_dilation(fg, structure=cube, border_value=0)
        fg = ndimage.binary_erosion(dilated, structure=cube, border_value=1)

    if params.dilate_size_voxels > 0:
        cube3 = np.ones((3, 3, 3), dtype=bool)
        fg = ndimage.binary_dilation(fg, structure=cube3,
                                     iterations=params.dilate_size_voxels)

    return LabelVolume(grid=image.grid, labels=fg.astype(np.uint8), schema_id=MASK_SCHEMA_ID)


def apply_mask(image: ImageVolume, mask: LabelVolume, fill_hu: float = DEFAULT_FILL_HU) -> ImageVolume:
    """Set voxels outside the mask to fill_hu (air by default)."""
    require_compatible(image, mask)
    keep = mask.labels > 0
    if image.voxels.dtype.kind in "iu":
        fill = int(round(fill_hu))
    else:
        fill = fill_hu
    out = np.where(keep, image.voxels, np.asarray(fill, dtype=image.voxels.dtype))
    return ImageVolume(grid=image.grid, voxels=out)


def mirror_with_label_swap(labels: LabelVolume, schema: LevelSchema) -> LabelVolume:
    """Mirror a label volume about its left-right midplane, swapping each
    level id for its mirror partner. The grid is unchanged; the content is
    reflected in place, which is the augmentation the training pipeline
    applied."""
    if labels.schema_id != schema.schema_id:
        raise ValueError(
            f"schema mismatch: volume tagged {labels.schema_id!r}, schema is {schema.schema_id!r}"
        )
    lr = labels.grid.find_axis("RL")
    if lr is None:
        raise ValueError(f"axis_codes {labels.grid.axis_codes} lack a left-right axis")
    arr_axis = 2 - lr  # array layout is (k, j, i)
    flipped = np.flip(labels.labels, axis=arr_axis)
    swapped = schema.mirror_lut()[flipped]
    return LabelVolume(grid=labels.grid, labels=np.ascontiguousarray(swapped),
                       schema_id=labels.schema_id)
