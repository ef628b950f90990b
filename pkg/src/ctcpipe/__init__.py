"""Three-stage circulating tumor cell detection on CK/DAPI/CD45 image stacks."""

from .decision import (
    ConfidenceBreakdown,
    DecisionParams,
    Semantics,
    Verdict,
    calibrate_thresholds,
    classify_candidate,
    confidence_score,
    overlap_fraction,
)
from .detection import Detection, DetectionLabel
from .detectors import DetectorBinding, Stage, decode_rle_mask, encode_rle_mask, run_detector
from .pipeline import BatchReport, PipelineConfig, SampleResult, StageBindings, evaluate_batch, run_batch, run_sample
from .raster import BinaryMask, BoundingBox, ChannelSet, GrayImage, crop, mask_area, mask_intersection_area, to_mask
from .thresholding import OtsuResult, apply_threshold, binarize_otsu, otsu_threshold

__version__ = "0.1.0"

__all__ = [
    "BatchReport",
    "BinaryMask",
    "BoundingBox",
    "ChannelSet",
    "ConfidenceBreakdown",
    "DecisionParams",
    "Detection",
    "DetectionLabel",
    "DetectorBinding",
    "GrayImage",
    "OtsuResult",
    "PipelineConfig",
    "SampleResult",
    "Semantics",
    "Stage",
    "StageBindings",
    "Verdict",
    "apply_threshold",
    "binarize_otsu",
    "calibrate_thresholds",
    "classify_candidate",
    "confidence_score",
    "crop",
    "decode_rle_mask",
    "encode_rle_mask",
    "evaluate_batch",
    "mask_area",
    "mask_intersection_area",
    "otsu_threshold",
    "overlap_fraction",
    "run_batch",
    "run_detector",
    "run_sample",
    "to_mask",
]
