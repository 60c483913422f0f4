"""NIfTI-1 volume IO and the canonical in-memory volume types.

Volumes are parsed from single-file little-endian NIfTI-1 (``.nii`` or
``.nii.gz``), reoriented on load so the k index axis runs inferior to
superior, and kept immutable afterwards. Voxel arrays are stored k-major,
shape ``(nz, ny, nx)``, so ``arr[k]`` is one axial slice.
"""

from __future__ import annotations

import gzip
import math
import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import (
    GeometryMismatchError,
    LabelDomainError,
    UnsupportedGeometryError,
    VolumeParseError,
)

HEADER_SIZE = 348
DATA_OFFSET = 352
MAGIC = b"n+1\x00"

# NIfTI datatype code -> little-endian numpy dtype
_DTYPES = {
    2: np.dtype("u1"),
    4: np.dtype("<i2"),
    8: np.dtype("<i4"),
    16: np.dtype("<f4"),
    64: np.dtype("<f8"),
    256: np.dtype("i1"),
    512: np.dtype("<u2"),
}

# Direction of increasing index along each anatomical axis (RAS+ world).
AXIS_CODES = ("R", "L", "A", "P", "S", "I")
_CODE_VEC = {
    "R": (1, 0, 0),
    "L": (-1, 0, 0),
    "A": (0, 1, 0),
    "P": (0, -1, 0),
    "S": (0, 0, 1),
    "I": (0, 0, -1),
}
_CODE_WORLD_AXIS = {"R": 0, "L": 0, "A": 1, "P": 1, "S": 2, "I": 2}

SPACING_TOL_MM = 1e-6
ORIGIN_TOL_MM = 1e-3
OBLIQUE_TOL = 1e-3


@dataclass(frozen=True)
class VoxelGrid:
    """Geometry of a volume: dims, anisotropic spacing, origin, orientation.

    ``axis_codes[c]`` names the anatomical direction of increasing index
    along index axis c (i, j, k), e.g. ``("L", "P", "S")``. After loading,
    the k axis always carries code "S".
    """

    dims: tuple[int, int, int]
    spacing_mm: tuple[float, float, float]
    origin_mm: tuple[float, float, float] = (0.0, 0.0, 0.0)
    axis_codes: tuple[str, str, str] = ("L", "P", "S")

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "spacing_mm", tuple(float(s) for s in self.spacing_mm))
        object.__setattr__(self, "origin_mm", tuple(float(o) for o in self.origin_mm))
        object.__setattr__(self, "axis_codes", tuple(self.axis_codes))
        if len(self.dims) != 3 or any(d < 1 for d in self.dims):
            raise ValueError(f"dims must be three positive counts, got {self.dims}")
        if len(self.spacing_mm) != 3 or any(
            not math.isfinite(s) or s <= 0 for s in self.spacing_mm
        ):
            raise ValueError(f"spacing must be three positive mm values, got {self.spacing_mm}")
        if any(c not in _CODE_VEC for c in self.axis_codes) or sorted(
            _CODE_WORLD_AXIS[c] for c in self.axis_codes
        ) != [0, 1, 2]:
            raise ValueError(f"axis_codes must cover R/L, A/P, S/I once each, got {self.axis_codes}")

    @property
    def shape_kji(self) -> tuple[int, int, int]:
        """Array shape (nz, ny, nx) for the k-major voxel layout."""
        nx, ny, nz = self.dims
        return (nz, ny, nx)

    def direction(self, index_axis: int) -> np.ndarray:
        """Signed unit world vector for increasing index along an index axis."""
        return np.asarray(_CODE_VEC[self.axis_codes[index_axis]], dtype=np.float64)

    def find_axis(self, codes: str) -> int | None:
        """Index axis whose code is one of ``codes``, or None."""
        for c, code in enumerate(self.axis_codes):
            if code in codes:
                return c
        return None

    def affine(self) -> np.ndarray:
        """4x4 index-to-world affine (axis-aligned by construction)."""
        out = np.eye(4)
        for c in range(3):
            out[:3, c] = self.direction(c) * self.spacing_mm[c]
        out[:3, 3] = self.origin_mm
        return out


def _readonly(arr: np.ndarray) -> np.ndarray:
    view = arr.view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True)
class ImageVolume:
    """Scalar CT intensities in HU on a VoxelGrid, k-major slice order."""

    grid: VoxelGrid
    voxels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.voxels)
        if arr.shape != self.grid.shape_kji:
            raise ValueError(
                f"voxel array shape {arr.shape} does not match grid (nz,ny,nx) {self.grid.shape_kji}"
            )
        object.__setattr__(self, "voxels", _readonly(arr))


@dataclass(frozen=True)
class LabelVolume:
    """Per-voxel class ids (uint8, 0 = background) on a VoxelGrid."""

    grid: VoxelGrid
    labels: np.ndarray
    schema_id: str = "hn-levels-20"

    def __post_init__(self):
        arr = np.asarray(self.labels)
        if arr.dtype != np.uint8:
            raise LabelDomainError(f"labels must be uint8, got {arr.dtype}")
        if arr.shape != self.grid.shape_kji:
            raise ValueError(
                f"label array shape {arr.shape} does not match grid (nz,ny,nx) {self.grid.shape_kji}"
            )
        object.__setattr__(self, "labels", _readonly(arr))


def check_geometry_compatible(a, b) -> tuple[bool, list[str]]:
    """True iff two volumes/grids share a grid, plus a mismatch report.

    Dims and axis codes must be equal; spacing within 1e-6 mm; origin
    within 1e-3 mm.
    """
    ga: VoxelGrid = getattr(a, "grid", a)
    gb: VoxelGrid = getattr(b, "grid", b)
    report: list[str] = []
    if ga.dims != gb.dims:
        report.append(f"dims: {ga.dims} vs {gb.dims}")
    if any(abs(x - y) > SPACING_TOL_MM for x, y in zip(ga.spacing_mm, gb.spacing_mm)):
        report.append(f"spacing_mm: {ga.spacing_mm} vs {gb.spacing_mm}")
    if any(abs(x - y) > ORIGIN_TOL_MM for x, y in zip(ga.origin_mm, gb.origin_mm)):
        report.append(f"origin_mm: {ga.origin_mm} vs {gb.origin_mm}")
    if ga.axis_codes != gb.axis_codes:
        report.append(f"axis_codes: {ga.axis_codes} vs {gb.axis_codes}")
    return (not report, report)


def require_compatible(a, b) -> None:
    ok, report = check_geometry_compatible(a, b)
    if not ok:
        raise GeometryMismatchError("incompatible geometry: " + "; ".join(report))


# ---------------------------------------------------------------------------
# header parsing

@dataclass
class _Header:
    dims: tuple[int, int, int]
    dtype: np.dtype
    vox_offset: int
    scl_slope: float
    scl_inter: float
    affine3: np.ndarray  # 3x3 index->world linear part
    origin: np.ndarray   # 3-vector


def _unpack(fmt: str, buf: bytes, off: int):
    return struct.unpack_from("<" + fmt, buf, off)


def _parse_header(buf: bytes) -> _Header:
    if len(buf) < HEADER_SIZE:
        raise VolumeParseError(f"header truncated: {len(buf)} bytes, need {HEADER_SIZE}")
    (sizeof_hdr,) = _unpack("i", buf, 0)
    if sizeof_hdr != HEADER_SIZE:
        raise VolumeParseError(
            f"sizeof_hdr: expected {HEADER_SIZE}, got {sizeof_hdr} (not little-endian NIfTI-1)"
        )
    magic = buf[344:348]
    if magic != MAGIC:
        raise VolumeParseError(f"magic: expected {MAGIC!r}, got {magic!r}")

    dim = _unpack("8h", buf, 40)
    ndim = dim[0]
    if not 1 <= ndim <= 7:
        raise VolumeParseError(f"dim[0]: {ndim} outside 1..7")
    for i in range(1, ndim + 1):
        if dim[i] < 1:
            raise VolumeParseError(f"dim[{i}]: {dim[i]} must be >= 1")
        if i > 3 and dim[i] != 1:
            raise VolumeParseError(f"dim[{i}]: {dim[i]}; only 3D volumes supported")
    nx = dim[1]
    ny = dim[2] if ndim >= 2 else 1
    nz = dim[3] if ndim >= 3 else 1

    datatype, bitpix = _unpack("hh", buf, 70)
    if datatype not in _DTYPES:
        raise VolumeParseError(f"datatype: unsupported code {datatype}")
    dtype = _DTYPES[datatype]
    if bitpix != 8 * dtype.itemsize:
        raise VolumeParseError(f"bitpix: {bitpix} does not match datatype {datatype}")

    pixdim = _unpack("8f", buf, 76)
    (vox_offset_f,) = _unpack("f", buf, 108)
    if not math.isfinite(vox_offset_f) or vox_offset_f != int(vox_offset_f):
        raise VolumeParseError(f"vox_offset: {vox_offset_f!r} not an integral offset")
    vox_offset = int(vox_offset_f)
    if vox_offset < HEADER_SIZE:
        raise VolumeParseError(f"vox_offset: {vox_offset} < {HEADER_SIZE}")

    scl_slope, scl_inter = _unpack("ff", buf, 112)
    if not math.isfinite(scl_slope):
        scl_slope = 0.0  # NIfTI convention: unusable slope means no scaling
    if not math.isfinite(scl_inter):
        scl_inter = 0.0

    qform_code, sform_code = _unpack("hh", buf, 252)
    if sform_code > 0:
        srow = _unpack("12f", buf, 280)
        if not all(math.isfinite(v) for v in srow):
            raise VolumeParseError("srow: non-finite entry")
        rows = np.asarray(srow, dtype=np.float64).reshape(3, 4)
        affine3 = rows[:, :3]
        origin = rows[:, 3]
    elif qform_code > 0:
        b, c, d = _unpack("3f", buf, 256)
        qo = _unpack("3f", buf, 268)
        if not all(math.isfinite(v) for v in (b, c, d, *qo)):
            raise VolumeParseError("quatern: non-finite entry")
        asq = 1.0 - (b * b + c * c + d * d)
        if asq < -1e-6:
            raise VolumeParseError(f"quatern_bcd: norm {1 - asq:.6f} exceeds 1")
        a = math.sqrt(max(asq, 0.0))
        rot = np.array(
            [
                [a * a + b * b - c * c - d * d, 2 * (b * c - a * d), 2 * (b * d + a * c)],
                [2 * (b * c + a * d), a * a - b * b + c * c - d * d, 2 * (c * d - a * b)],
                [2 * (b * d - a * c), 2 * (c * d + a * b), a * a - b * b - c * c + d * d],
            ],
            dtype=np.float64,
        )
        for i in range(1, 4):
            if not math.isfinite(pixdim[i]) or pixdim[i] <= 0:
                raise VolumeParseError(f"pixdim[{i}]: {pixdim[i]!r} must be > 0")
        qfac = -1.0 if pixdim[0] < 0 else 1.0
        affine3 = rot * np.array([pixdim[1], pixdim[2], qfac * pixdim[3]])
        origin = np.asarray(qo, dtype=np.float64)
    else:
        for i in range(1, 4):
            if not math.isfinite(pixdim[i]) or pixdim[i] <= 0:
                raise VolumeParseError(f"pixdim[{i}]: {pixdim[i]!r} must be > 0")
        affine3 = np.diag([pixdim[1], pixdim[2], pixdim[3]]).astype(np.float64)
        origin = np.zeros(3)

    return _Header(
        dims=(nx, ny, nz),
        dtype=dtype,
        vox_offset=vox_offset,
        scl_slope=float(scl_slope),
        scl_inter=float(scl_inter),
        affine3=affine3,
        origin=origin,
    )


def _decompose_axes(affine3: np.ndarray) -> tuple[tuple[float, ...], tuple[str, ...]]:
    """Column norms and nearest-axis codes; rejects oblique/degenerate affines."""
    spacing = []
    codes = []
    for c in range(3):
        col = affine3[:, c]
        norm = float(np.linalg.norm(col))
        if not math.isfinite(norm) or norm <= 0:
            raise VolumeParseError(f"affine: column {c} has zero or non-finite length")
        unit = col / norm
        world = int(np.argmax(np.abs(unit)))
        off = math.sqrt(max(0.0, 1.0 - float(unit[world]) ** 2))
        if off > OBLIQUE_TOL:
            raise UnsupportedGeometryError(
                f"oblique affine: index axis {c} off nearest anatomical axis by {off:.2e} "
                f"(tolerance {OBLIQUE_TOL})"
            )
        positive = unit[world] > 0
        codes.append("RAS"[world] if positive else "LPI"[world])
        spacing.append(norm)
    if sorted(_CODE_WORLD_AXIS[c] for c in codes) != [0, 1, 2]:
        raise UnsupportedGeometryError(
            f"degenerate affine: index axes map to anatomical axes {codes}"
        )
    return tuple(spacing), tuple(codes)


def _canonicalize(arr: np.ndarray, hdr: _Header, spacing, codes):
    """Reorder/flip so the k index axis points superior; returns grid + array.

    Keeps the other two index axes in their original relative order and
    only ever flips the craniocaudal axis, so in-plane content is
    untouched.
    """
    p = next(c for c in range(3) if codes[c] in "SI")
    a, b = [c for c in range(3) if c != p]
    flip = codes[p] == "I"

    # array axes are (k, j, i) = index axes (2, 1, 0)
    out = arr.transpose(2 - p, 2 - b, 2 - a)
    if flip:
        out = out[::-1]

    corner = np.zeros(3)
    if flip:
        corner[p] = hdr.dims[p] - 1
    origin = hdr.affine3 @ corner + hdr.origin

    grid = VoxelGrid(
        dims=(hdr.dims[a], hdr.dims[b], hdr.dims[p]),
        spacing_mm=(spacing[a], spacing[b], spacing[p]),
        origin_mm=tuple(float(v) for v in origin),
        axis_codes=(codes[a], codes[b], "S"),
    )
    return grid, np.ascontiguousarray(out)


def _read_bytes(path: str | os.PathLike) -> bytes:
    with open(path, "rb") as fh:
        head = fh.read(2)
        fh.seek(0)
        if head == b"\x1f\x8b":
            try:
                with gzip.open(fh, "rb") as gz:
                    return gz.read()
            except (gzip.BadGzipFile, EOFError, zlib.error) as exc:
                raise VolumeParseError(f"gzip: corrupt stream in {path}: {exc}") from exc
        return fh.read()


def read_nifti(path: str | os.PathLike, kind: str = "image"):
    """Read a single-file NIfTI-1 volume.

    Parameters
    ----------
    path : str
        ``.nii`` or ``.nii.gz`` file, little-endian, magic ``n+1``.
    kind : "image" | "label"
        Labels are validated (integer values in 0..255, identity
        scl_slope/inter) and returned as a LabelVolume; images have
        scl scaling applied and are returned as an ImageVolume.

    Returns
    -------
    ImageVolume or LabelVolume, reoriented so k runs inferior->superior.
    """
    if kind not in ("image", "label"):
        raise ValueError(f"kind must be 'image' or 'label', got {kind!r}")
    buf = _read_bytes(path)
    hdr = _parse_header(buf)

    nx, ny, nz = hdr.dims
    nbytes = nx * ny * nz * hdr.dtype.itemsize
    if hdr.vox_offset + nbytes > len(buf):
        raise VolumeParseError(
            f"data truncated: need {hdr.vox_offset + nbytes} bytes, file has {len(buf)}"
        )
    raw = np.frombuffer(buf, dtype=hdr.dtype, count=nx * ny * nz, offset=hdr.vox_offset)
    arr = raw.reshape(nz, ny, nx)

    spacing, codes = _decompose_axes(hdr.affine3)
    grid, arr = _canonicalize(arr, hdr, spacing, codes)

    if kind == "label":
        identity_scl = hdr.scl_slope in (0.0, 1.0) and hdr.scl_inter == 0.0
        if not identity_scl:
            raise LabelDomainError(
                f"scl_slope/scl_inter must be identity for labels, got "
                f"({hdr.scl_slope}, {hdr.scl_inter})"
            )
        if arr.dtype.kind == "f":
            if not np.all(np.isfinite(arr)):
                raise LabelDomainError("non-finite label value")
            if np.any(arr != np.floor(arr)):
                bad = float(arr[arr != np.floor(arr)].flat[0])
                raise LabelDomainError(f"non-integer label value {bad}")
        lo = float(arr.min()) if arr.size else 0.0
        hi = float(arr.max()) if arr.size else 0.0
        if lo < 0 or hi > 255:
            raise LabelDomainError(f"label value outside 0..255: range [{lo}, {hi}]")
        return LabelVolume(grid=grid, labels=arr.astype(np.uint8))

    if hdr.scl_slope not in (0.0, 1.0) or hdr.scl_inter != 0.0:
        slope = hdr.scl_slope if hdr.scl_slope != 0.0 else 1.0
        arr = arr.astype(np.float32) * np.float32(slope) + np.float32(hdr.scl_inter)
    return ImageVolume(grid=grid, voxels=arr)


def _build_header(grid: VoxelGrid, datatype: int, itemsize: int) -> bytes:
    buf = bytearray(HEADER_SIZE)
    struct.pack_into("<i", buf, 0, HEADER_SIZE)
    nx, ny, nz = grid.dims
    struct.pack_into("<8h", buf, 40, 3, nx, ny, nz, 1, 1, 1, 1)
    struct.pack_into("<hh", buf, 70, datatype, 8 * itemsize)
    sx, sy, sz = grid.spacing_mm
    struct.pack_into("<8f", buf, 76, 1.0, sx, sy, sz, 0.0, 0.0, 0.0, 0.0)
    struct.pack_into("<f", buf, 108, float(DATA_OFFSET))
    struct.pack_into("<ff", buf, 112, 1.0, 0.0)  # scl identity
    struct.pack_into("<B", buf, 123, 2)  # xyzt_units: mm
    struct.pack_into("<hh", buf, 252, 0, 1)  # qform off, sform aligned
    aff = grid.affine()
    struct.pack_into("<12f", buf, 280, *aff[:3, :].reshape(-1))
    buf[344:348] = MAGIC
    return bytes(buf)


def write_nifti(volume, path: str | os.PathLike) -> None:
    """Write a volume as single-file NIfTI-1 (gzipped iff path ends in .gz).

    Labels are stored as uint8; images as int16 when they hold int16-range
    integers, else float32. The write is atomic: a temp file in the target
    directory is renamed over the destination, so a failure leaves no
    partial file.
    """
    if isinstance(volume, LabelVolume):
        data = volume.labels
        datatype = 2
    elif isinstance(volume, ImageVolume):
        v = volume.voxels
        if v.dtype.kind in "iu" and int(v.min()) >= -32768 and int(v.max()) <= 32767:
            data = v.astype("<i2")
            datatype = 4
        else:
            data = v.astype("<f4")
            datatype = 16
    else:
        raise TypeError(f"cannot serialize {type(volume).__name__}")

    header = _build_header(volume.grid, datatype, data.dtype.itemsize)
    payload = header + b"\x00" * (DATA_OFFSET - HEADER_SIZE) + np.ascontiguousarray(data).tobytes()

    path = os.fspath(path)
    tmp = path + ".tmp"
    try:
        if str(path).endswith(".gz"):
            # mtime pinned so identical volumes produce identical bytes
            with open(tmp, "wb") as fh:
                # filename="" keeps the stream byte-identical across paths
                with gzip.GzipFile(filename="", fileobj=fh, mode="wb", mtime=0) as gz:
                    gz.write(payload)
        else:
            with open(tmp, "wb") as fh:
                fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise OSError(f"failed writing {path}: {exc}") from exc
