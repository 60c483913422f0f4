"""CT slice-plane adjustment of label volumes.

Craniocaudal level boundaries must coincide with axial slice boundaries:
no axial slice may contain two levels that are mutually exclusive per the
schema. Phase A resolves such conflicts by per-slice majority; Phase B
clears near-empty or sharply truncated boundary slices to background.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .schema import LevelSchema
from .volume_io import LabelVolume


@dataclass(frozen=True)
class SliceAdjustConfig:
    min_foreground_voxels: int = 10
    drop_fraction: float = 0.80

    def __post_init__(self):
        if self.min_foreground_voxels < 0:
            raise ValueError(f"min_foreground_voxels must be >= 0, got {self.min_foreground_voxels}")
        if not 0 < self.drop_fraction <= 1:
            raise ValueError(f"drop_fraction must be in (0, 1], got {self.drop_fraction}")


@dataclass(frozen=True)
class SliceConflict:
    slice_index: int
    group: tuple[int, ...]
    winner: int
    voxels_overwritten: int


@dataclass(frozen=True)
class BackgroundClear:
    slice_index: int
    rule: str  # "min_voxels" | "drop"
    voxels_cleared: int


@dataclass
class AdjustmentReport:
    """Audit record of every change slice_plane_adjust made."""

    slice_conflicts: list[SliceConflict] = field(default_factory=list)
    background_clears: list[BackgroundClear] = field(default_factory=list)

    @property
    def total_changed_voxels(self) -> int:
        return sum(c.voxels_overwritten for c in self.slice_conflicts) + sum(
            c.voxels_cleared for c in self.background_clears
        )

    @property
    def is_empty(self) -> bool:
        return not self.slice_conflicts and not self.background_clears

    def to_dict(self) -> dict:
        return {
            "slice_conflicts": [
                {
                    "slice": c.slice_index,
                    "group": list(c.group),
                    "winner": c.winner,
                    "voxels_overwritten": c.voxels_overwritten,
                }
                for c in self.slice_conflicts
            ],
            "background_clears": [
                {"slice": c.slice_index, "rule": c.rule, "voxels_cleared": c.voxels_cleared}
                for c in self.background_clears
            ],
            "total_changed_voxels": self.total_changed_voxels,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


@dataclass(frozen=True)
class Violation:
    slice_index: int
    group: tuple[int, ...]
    present: tuple[int, ...]  # group members with voxels on the slice


def _require_schema(labels: LabelVolume, schema: LevelSchema) -> None:
    if labels.schema_id != schema.schema_id:
        raise ValueError(
            f"schema mismatch: volume tagged {labels.schema_id!r}, schema is {schema.schema_id!r}"
        )


def _slice_histograms(arr: np.ndarray) -> np.ndarray:
    """(nz, 256) per-slice voxel counts per class id."""
    nz = arr.shape[0]
    hist = np.zeros((nz, 256), dtype=np.int64)
    flat = arr.reshape(nz, -1)
    for k in range(nz):
        hist[k] = np.bincount(flat[k], minlength=256)
    return hist


def slice_consistency_violations(labels: LabelVolume, schema: LevelSchema) -> list[Violation]:
    """Every (axial slice, exclusion group) with >= 2 group members present."""
    _require_schema(labels, schema)
    hist = _slice_histograms(labels.labels)
    out: list[Violation] = []
    for k in range(hist.shape[0]):
        h = hist[k]
        for group in schema.exclusion_groups:
            present = tuple(i for i in group if h[i] > 0)
            if len(present) >= 2:
                out.append(Violation(slice_index=k, group=group, present=present))
    return out


def slice_plane_adjust(
    labels: LabelVolume,
    schema: LevelSchema,
    cfg: SliceAdjustConfig | None = None,
) -> tuple[LabelVolume, AdjustmentReport]:
    """Make a label volume slice-consistent and clean its boundary slices.

    Phase A, per axial slice and exclusion group: when two or more group
    members occupy the slice, all of them are relabeled to the member with
    the largest voxel count on that slice (ties to the lowest id). Groups
    are applied in schema order against the running state, and only slices
    with a conflict are touched.

    Phase B, on per-slice non-background counts: a slice is cleared to
    background when its count is <= min_foreground_voxels, or when the
    count dropped by >= drop_fraction relative to the previous slice and
    the next slice is empty. The drop rule runs once per craniocaudal
    orientation (ascending: previous = k-1, next = k+1; descending:
    mirrored), with slices visited so that a clearing can expose the one
    behind it within the same pass; a slice past the volume end counts as
    empty. The composed operation is idempotent.

    Returns the adjusted volume and an audit report.
    """
    _require_schema(labels, schema)
    cfg = cfg or SliceAdjustConfig()
    arr = labels.labels.copy()
    nz = arr.shape[0]
    bg = schema.background_id
    hist = _slice_histograms(arr)
    report = AdjustmentReport()

    # Phase A: exclusion-group resolution by per-slice majority.
    for k in range(nz):
        h = hist[k]
        lut = None
        for group in schema.exclusion_groups:
            present = [i for i in group if h[i] > 0]
            if len(present) < 2:
                continue
            winner = max(present, key=lambda i: (h[i], -i))
            losers = [i for i in present if i != winner]
            if lut is None:
                lut = np.arange(256, dtype=np.uint8)
            lut[:] = np.arange(256, dtype=np.uint8)
            lut[losers] = winner
            arr[k] = lut[arr[k]]
            overwritten = int(sum(h[i] for i in losers))
            h[winner] += overwritten
            h[losers] = 0
            report.slice_conflicts.append(
                SliceConflict(
                    slice_index=k, group=group, winner=int(winner),
                    voxels_overwritten=overwritten,
                )
            )

    # Phase B: background boundary rules on non-background counts.
    # Phase A conserves non-background counts, so the histograms stay valid.
    per_slice = arr.shape[1] * arr.shape[2]
    counts = per_slice - hist[:, bg]

    def clear(k: int, rule: str) -> None:
        report.background_clears.append(
            BackgroundClear(slice_index=k, rule=rule, voxels_cleared=int(counts[k]))
        )
        arr[k] = bg
        counts[k] = 0

    for k in range(nz):
        if 0 < counts[k] <= cfg.min_foreground_voxels:
            clear(k, "min_voxels")

    # Ascending orientation: previous = k-1, next = k+1. Visiting high k
    # first lets a cleared slice expose its predecessor within this pass.
    for k in range(nz - 1, -1, -1):
        if counts[k] == 0:
            continue
        next_empty = k == nz - 1 or counts[k + 1] == 0
        prev = counts[k - 1] if k >= 1 else 0
        if next_empty and prev > 0 and (prev - counts[k]) / prev >= cfg.drop_fraction:
            clear(k, "drop")

    # Descending orientation, mirrored.
    for k in range(nz):
        if counts[k] == 0:
            continue
        next_empty = k == 0 or counts[k - 1] == 0
        prev = counts[k + 1] if k + 1 < nz else 0
        if next_empty and prev > 0 and (prev - counts[k]) / prev >= cfg.drop_fraction:
            clear(k, "drop")

    out = LabelVolume(grid=labels.grid, labels=arr, schema_id=labels.schema_id)
    return out, report


def largest_component_per_label(
    labels: LabelVolume,
    schema: LevelSchema,
    which: set[int] | None = None,
    connectivity: int = 26,
) -> LabelVolume:
    """Keep only the largest connected component of each selected level.

    26-connectivity by default (configurable to 6). Equal-sized components
    tie-break to the one whose first voxel comes earliest in k-major scan
    order. Unselected levels are untouched.
    """
    _require_schema(labels, schema)
    if connectivity == 26:
        structure = np.ones((3, 3, 3), dtype=bool)
    elif connectivity == 6:
        structure = ndimage.generate_binary_structure(3, 1)
    else:
        raise ValueError(f"connectivity must be 6 or 26, got {connectivity}")

    ids = schema.level_ids if which is None else tuple(sorted(which))
    for i in ids:
        if i not in schema.level_ids:
            raise ValueError(f"unknown level id {i}")

    arr = labels.labels.copy()
    present = set(np.unique(arr).tolist())
    for level_id in ids:
        if level_id not in present:
            continue
        mask = arr == level_id
        comp, n = ndimage.label(mask, structure=structure)
        if n <= 1:
            continue
        sizes = np.bincount(comp.ravel())
        sizes[0] = 0
        best = sizes.max()
        cands = np.flatnonzero(sizes == best)
        if len(cands) == 1:
            winner = int(cands[0])
        else:
            flat = comp.ravel()
            first = np.flatnonzero(np.isin(flat, cands))[0]
            winner = int(flat[first])
        arr[mask & (comp != winner)] = schema.background_id
    return LabelVolume(grid=labels.grid, labels=arr, schema_id=labels.schema_id)
