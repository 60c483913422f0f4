"""Quality assurance for head-and-neck lymph node level label volumes.

The package reads and writes label/image volumes on a canonical voxel grid,
builds foreground masks, repairs inter-level inconsistencies slice by slice,
computes overlap and surface-distance metrics against an independent oracle,
runs the matching significance tests, and serves a blinded expert review of
contour sets over HTTP.
"""

from .errors import (
    DegenerateInputError,
    GeometryMismatchError,
    LabelDomainError,
    LevelQAError,
    PlanError,
    RangeError,
    SchemaValidationError,
    SizeGuardError,
    UndefinedMetricError,
    UnsupportedGeometryError,
    VolumeParseError,
)
from .metrics import (
    LevelEntry,
    MetricReport,
    default_tolerance,
    evaluate_case,
    hausdorff_max,
    surface_dice,
    volumetric_dice,
)
from .phantom import (
    PhantomConfig,
    generate_phantom,
    oracle_metrics,
    perturb_boundary_jitter,
    perturb_morphological,
)
from .postprocess import (
    AdjustmentReport,
    SliceAdjustConfig,
    largest_component_per_label,
    slice_consistency_violations,
    slice_plane_adjust,
)
from .preprocess import (
    CropBox,
    OtsuMaskParams,
    apply_mask,
    corrected_otsu_threshold,
    crop_to_box,
    foreground_mask_otsu,
    mirror_with_label_swap,
)
from .schema import LevelDef, LevelSchema, default_schema, load_schema
from .stats import (
    Descriptive,
    PairedSample,
    TestResult,
    descriptive,
    paired_levene,
    summary_line,
    wilcoxon_rank_sum,
    wilcoxon_signed_rank,
)
from .volume_io import (
    ImageVolume,
    LabelVolume,
    VoxelGrid,
    check_geometry_compatible,
    read_nifti,
    require_compatible,
    write_nifti,
)

__version__ = "0.1.0"

__all__ = [
    "AdjustmentReport",
    "CropBox",
    "DegenerateInputError",
    "Descriptive",
    "GeometryMismatchError",
    "ImageVolume",
    "LabelDomainError",
    "LabelVolume",
    "LevelDef",
    "LevelEntry",
    "LevelQAError",
    "LevelSchema",
    "MetricReport",
    "OtsuMaskParams",
    "PairedSample",
    "PhantomConfig",
    "PlanError",
    "RangeError",
    "SchemaValidationError",
    "SizeGuardError",
    "SliceAdjustConfig",
    "TestResult",
    "UndefinedMetricError",
    "UnsupportedGeometryError",
    "VolumeParseError",
    "VoxelGrid",
    "apply_mask",
    "check_geometry_compatible",
    "corrected_otsu_threshold",
    "crop_to_box",
    "default_schema",
    "default_tolerance",
    "descriptive",
    "evaluate_case",
    "foreground_mask_otsu",
    "generate_phantom",
    "hausdorff_max",
    "largest_component_per_label",
    "load_schema",
    "mirror_with_label_swap",
    "oracle_metrics",
    "paired_levene",
    "perturb_boundary_jitter",
    "perturb_morphological",
    "read_nifti",
    "require_compatible",
    "slice_consistency_violations",
    "slice_plane_adjust",
    "summary_line",
    "surface_dice",
    "volumetric_dice",
    "wilcoxon_rank_sum",
    "wilcoxon_signed_rank",
    "write_nifti",
]
