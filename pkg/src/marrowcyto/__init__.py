"""Convergence-driven differential cell counting on bone marrow aspirate
whole-slide images: tile streaming, ROI gating, object detection with
DIoU suppression, histogram accumulation with chi-square convergence,
evaluation metrics, dataset/active-learning management and the review
service."""

from .classes import (
    ALL_CLASSES,
    EVAL_CLASSES,
    MANUAL_NDC_CLASSES,
    ME_NUMERATOR_CLASSES,
    NDC_CLASSES,
    CellClass,
)
from .detect import BBox, Detection, DetectorBackend, diou, diou_nms, iou
from .errors import MarrowCytoError
from .hct import (
    DEFAULT_CONVERGENCE_PATIENCE,
    DEFAULT_CONVERGENCE_THRESHOLD,
    HCT,
    IHCT,
    ConvergenceVector,
    NdcReport,
    accumulate,
    bm_me_ratio,
    check_convergence,
    chi_square_distance,
    convergence_vector,
    hct_from_detections,
    ndc_report,
)
from .pipeline import PipelineConfig, RunRecord, run_pipeline, write_report_files
from .roi import RoiDecision, RoiScore, TileClassifierBackend, gate, score_tile
from .slides import SlideHandle, Tile, TileGrid, extract_tile, iterate_tiles, make_grid, open_slide

__version__ = "0.1.0"

__all__ = [
    "ALL_CLASSES",
    "BBox",
    "CellClass",
    "ConvergenceVector",
    "DEFAULT_CONVERGENCE_PATIENCE",
    "DEFAULT_CONVERGENCE_THRESHOLD",
    "Detection",
    "DetectorBackend",
    "EVAL_CLASSES",
    "HCT",
    "IHCT",
    "MANUAL_NDC_CLASSES",
    "ME_NUMERATOR_CLASSES",
    "MarrowCytoError",
    "NDC_CLASSES",
    "NdcReport",
    "PipelineConfig",
    "RoiDecision",
    "RoiScore",
    "RunRecord",
    "SlideHandle",
    "Tile",
    "TileClassifierBackend",
    "TileGrid",
    "accumulate",
    "bm_me_ratio",
    "check_convergence",
    "chi_square_distance",
    "convergence_vector",
    "diou",
    "diou_nms",
    "extract_tile",
    "gate",
    "hct_from_detections",
    "iou",
    "iterate_tiles",
    "make_grid",
    "ndc_report",
    "open_slide",
    "run_pipeline",
    "score_tile",
    "write_report_files",
    "__version__",
]
