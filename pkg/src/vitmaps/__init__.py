"""Visual-explanation maps for Vision Transformers and their evaluation
against bounding-box annotations."""

__version__ = "0.1.0"

from .errors import ImageFormatError, ShapeError, StateError, WeightFormatError
from .eval import (
    AnnotationBox,
    BinaryMask,
    EvalResult,
    aggregate,
    box_iou,
    evaluate_sample,
    pointing_accuracy,
    pointing_game,
    threshold_top_percentile,
    tightest_bbox,
)
from .model import (
    CaptureSet,
    ViTConfig,
    WeightStore,
    backward_class,
    forward_with_capture,
    load_weights,
    parameter_count,
    preprocess,
)
from .saliency import (
    METHODS,
    SaliencyMap,
    attention_cls_map,
    chefer_map,
    compute_map,
    gradcam_map,
    upsample_bilinear,
)
from .tensor import Tape, Tensor

__all__ = [
    "AnnotationBox",
    "BinaryMask",
    "CaptureSet",
    "EvalResult",
    "ImageFormatError",
    "METHODS",
    "SaliencyMap",
    "ShapeError",
    "StateError",
    "Tape",
    "Tensor",
    "ViTConfig",
    "WeightFormatError",
    "WeightStore",
    "aggregate",
    "attention_cls_map",
    "backward_class",
    "box_iou",
    "chefer_map",
    "compute_map",
    "evaluate_sample",
    "forward_with_capture",
    "gradcam_map",
    "load_weights",
    "parameter_count",
    "pointing_accuracy",
    "pointing_game",
    "preprocess",
    "threshold_top_percentile",
    "tightest_bbox",
    "upsample_bilinear",
]
