"""Typed errors shared across the toolkit."""

from __future__ import annotations


class LevelQAError(ValueError):
    """Base class for all toolkit errors raised on bad input."""


class VolumeParseError(LevelQAError):
    """Malformed volume file; the message names the offending header field."""


class LabelDomainError(LevelQAError):
    """Voxel values outside the label domain (non-integer or not in 0..255)."""


class UnsupportedGeometryError(LevelQAError):
    """Valid file, but an affine we refuse to handle (oblique/degenerate)."""


class GeometryMismatchError(LevelQAError):
    """Two volumes that must share a grid do not."""


class SchemaValidationError(LevelQAError):
    """Level schema violates its invariants; message lists all violations."""


class DegenerateInputError(LevelQAError):
    """Input carries no usable signal (e.g. constant image for Otsu)."""


class RangeError(LevelQAError):
    """Index or box outside volume bounds."""


class UndefinedMetricError(LevelQAError):
    """Metric has no defined value for this input (e.g. empty mask)."""


class SizeGuardError(LevelQAError):
    """Input exceeds a guard against quadratic blow-up in oracle code."""


class PlanError(LevelQAError):
    """Review plan cannot be built or does not match the request."""
