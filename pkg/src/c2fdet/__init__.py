"""Coarse-to-fine cascade engine for hand-held action detection.

A pose-scale detector proposes candidate regions, each candidate is
cropped with context margin and re-examined by an object-scale detector,
and only candidates confirmed by both stages count as positive evidence.
Detectors are pluggable: seeded oracles over symbolic scenes for
simulation and calibration, or real models behind the sidecar protocol.
"""

from .geometry import (
    Box,
    CropTransform,
    DegenerateRegionError,
    ProjectionError,
    expand_with_margin,
    iou,
    make_crop_transform,
    nms,
    project_to_global,
)
from .detectors import (
    Detection,
    DetectorHandle,
    DetectorProfile,
    DetectorTransportError,
    ImageRef,
    OracleDetector,
    oracle_from_profile,
    perfect_profile,
)
from .cascade import (
    CascadeResult,
    ConfirmedPair,
    PipelineConfig,
    SingleResult,
    aggregate_temporal,
    run_cascade,
    run_single,
)
from .simulator import CorpusSpec, GeometryRanges, Scene, generate_corpus
from .dataset import (
    AnnotationRecord,
    DerivedFineRecord,
    LintReport,
    derive_fine_dataset,
    lint_manifest,
    scenes_to_annotations,
)
from .evaluation import (
    CalibrationError,
    ClassCounts,
    EvalReport,
    TableTargets,
    box_precision_recall,
    calibrate_profiles,
    evaluate,
    render_report,
)
from .sidecar_client import SidecarDetector, SidecarEndpoint

__version__ = "0.1.0"

__all__ = [
    "AnnotationRecord",
    "Box",
    "CalibrationError",
    "CascadeResult",
    "ClassCounts",
    "ConfirmedPair",
    "CorpusSpec",
    "CropTransform",
    "DegenerateRegionError",
    "DerivedFineRecord",
    "Detection",
    "DetectorHandle",
    "DetectorProfile",
    "DetectorTransportError",
    "EvalReport",
    "GeometryRanges",
    "ImageRef",
    "LintReport",
    "OracleDetector",
    "PipelineConfig",
    "ProjectionError",
    "Scene",
    "SidecarDetector",
    "SidecarEndpoint",
    "SingleResult",
    "TableTargets",
    "aggregate_temporal",
    "box_precision_recall",
    "calibrate_profiles",
    "derive_fine_dataset",
    "evaluate",
    "expand_with_margin",
    "generate_corpus",
    "iou",
    "lint_manifest",
    "make_crop_transform",
    "nms",
    "oracle_from_profile",
    "perfect_profile",
    "project_to_global",
    "render_report",
    "run_cascade",
    "run_single",
    "scenes_to_annotations",
]
