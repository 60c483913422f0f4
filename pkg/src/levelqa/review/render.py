"""Server-side slice rendering: window/level grayscale plus 1-pixel
contour outlines per level, deterministic colors from the schema."""

from __future__ import annotations

import colorsys
import io

import numpy as np
from PIL import Image

from ..errors import RangeError
from ..schema import LevelSchema
from ..volume_io import ImageVolume, LabelVolume

PLANES = ("axial", "coronal", "sagittal")

WINDOW_PRESETS = (
    {"name": "soft-tissue", "wc": 40.0, "ww": 400.0},
    {"name": "lung", "wc": -600.0, "ww": 1500.0},
    {"name": "bone", "wc": 400.0, "ww": 1800.0},
)


def level_color(level_id: int) -> tuple[int, int, int]:
    """Deterministic, well-separated RGB color for a level id."""
    hue = (level_id * 0.6180339887498949) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.85, 1.0)
    return (int(round(r * 255)), int(round(g * 255)), int(round(b * 255)))


def palette(schema: LevelSchema) -> dict[int, str]:
    return {
        l.id: "#{:02x}{:02x}{:02x}".format(*level_color(l.id)) for l in schema.levels
    }


def plane_count(volume, plane: str) -> int:
    nx, ny, nz = volume.grid.dims
    return {"axial": nz, "coronal": ny, "sagittal": nx}[plane]


def extract_plane(arr: np.ndarray, plane: str, index: int) -> np.ndarray:
    """2D view for a plane; coronal/sagittal flipped so superior is up."""
    nz, ny, nx = arr.shape
    if plane == "axial":
        if not 0 <= index < nz:
            raise RangeError(f"axial index {index} outside 0..{nz - 1}")
        return arr[index]
    if plane == "coronal":
        if not 0 <= index < ny:
            raise RangeError(f"coronal index {index} outside 0..{ny - 1}")
        return arr[::-1, index, :]
    if plane == "sagittal":
        if not 0 <= index < nx:
            raise RangeError(f"sagittal index {index} outside 0..{nx - 1}")
        return arr[::-1, :, index]
    raise ValueError(f"plane must be one of {PLANES}, got {plane!r}")


def window_to_u8(values: np.ndarray, wc: float, ww: float) -> np.ndarray:
    """Linear window/level mapping to 8-bit: (v - wc)/ww + 0.5, clamped."""
    if ww <= 0:
        raise ValueError(f"window width must be > 0, got {ww}")
    g = (values.astype(np.float64) - wc) / ww + 0.5
    return np.rint(np.clip(g, 0.0, 1.0) * 255.0).astype(np.uint8)


def outline_2d(mask: np.ndarray) -> np.ndarray:
    """Pixels of mask with a 4-neighbor outside it (image edge counts)."""
    if not mask.any():
        return np.zeros_like(mask, dtype=bool)
    interior = np.zeros_like(mask, dtype=bool)
    interior[1:-1, 1:-1] = (
        mask[1:-1, 1:-1]
        & mask[:-2, 1:-1]
        & mask[2:, 1:-1]
        & mask[1:-1, :-2]
        & mask[1:-1, 2:]
    )
    return mask & ~interior


def render_slice(
    image: ImageVolume,
    labels: LabelVolume | None,
    plane: str,
    index: int,
    wc: float,
    ww: float,
) -> np.ndarray:
    """RGB (h, w, 3) uint8 slice with per-level contour outlines."""
    gray = window_to_u8(extract_plane(image.voxels, plane, index), wc, ww)
    rgb = np.stack([gray, gray, gray], axis=-1)
    if labels is not None:
        label_slice = extract_plane(labels.labels, plane, index)
        for level_id in np.unique(label_slice):
            if level_id == 0:
                continue
            edge = outline_2d(label_slice == level_id)
            rgb[edge] = level_color(int(level_id))
    return rgb


def encode_png(rgb: np.ndarray) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(rgb, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
