"""The three interpretability maps computed from a CaptureSet.

attention: final-layer [cls]-token attention row over patch tokens.
gradcam:   patch-token features of the last block weighted by channel-wise
           mean gradients, ReLU-clamped.
chefer:    gradient-weighted positive attention accumulated across layers,
           R <- R + mean_heads((dA * A)+) . R, starting from identity.

All grids are non-negative for gradcam/chefer; attention grids lie in [0, 1].
Maps are returned as plain float arrays; downstream evaluation is invariant
to positive-affine rescaling, so no normalization is applied here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import StateError
from .model import CaptureSet
from .resample import bilinear_resize

METHODS = ("attention", "gradcam", "chefer")


@dataclass
class SaliencyMap:
    grid: np.ndarray  # [G, G] patch-level relevance
    pixels: np.ndarray  # [S, S] bilinear upsampling of grid
    method: str


def upsample_bilinear(grid: np.ndarray, target: int) -> np.ndarray:
    """Align-corners-false bilinear upsampling to a square target."""
    return bilinear_resize(np.asarray(grid), target, target)


def _finish(grid: np.ndarray, size: int, method: str) -> SaliencyMap:
    return SaliencyMap(grid=grid, pixels=upsample_bilinear(grid, size), method=method)


def _require_backward(captures: CaptureSet, method: str) -> None:
    if not captures.has_backward:
        raise StateError(f"{method} requires backward_class to have run on these captures")


def attention_cls_map(captures: CaptureSet, head_agg: str | int = "mean") -> SaliencyMap:
    """[cls] attention row of the final layer, aggregated over heads.

    head_agg: "mean", "max", or a head index.
    """
    cfg = captures.config
    last = captures.attention[-1].array  # [H, T, T]
    rows = last[:, 0, 1:]  # cls row, patch columns only
    if head_agg == "mean":
        agg = rows.mean(axis=0)
    elif head_agg == "max":
        agg = rows.max(axis=0)
    else:
        h = int(head_agg)
        if not 0 <= h < cfg.heads:
            raise ValueError(f"head index {h} out of range [0, {cfg.heads})")
        agg = rows[h]
    grid = agg.reshape(cfg.grid, cfg.grid).astype(np.float64)
    return _finish(grid, cfg.image_size, "attention")


def gradcam_map(captures: CaptureSet, class_index: int | None = None) -> SaliencyMap:
    """Channel-weighted patch features of the final block, ReLU-clamped.

    Weights are the per-channel means (over patch tokens) of the feature
    gradients for the selected class.
    """
    _require_backward(captures, "gradcam_map")
    if class_index is not None and class_index != captures.class_index:
        raise StateError(
            f"captures hold gradients for class {captures.class_index}, not {class_index}"
        )
    cfg = captures.config
    x = captures.final_block_features.array[1:, :].astype(np.float64)  # [P, D]
    g = captures.final_block_features_grad.array[1:, :].astype(np.float64)
    alpha = g.mean(axis=0)  # [D]
    grid = np.maximum(x @ alpha, 0.0).reshape(cfg.grid, cfg.grid)
    return _finish(grid, cfg.image_size, "gradcam")


def chefer_map(captures: CaptureSet, class_index: int | None = None) -> SaliencyMap:
    """Relevance accumulated across layers from gradient-weighted attention."""
    _require_backward(captures, "chefer_map")
    if class_index is not None and class_index != captures.class_index:
        raise StateError(
            f"captures hold gradients for class {captures.class_index}, not {class_index}"
        )
    cfg = captures.config
    t = cfg.tokens
    r = np.eye(t, dtype=np.float64)
    for a, da in zip(captures.attention, captures.attention_grad):
        abar = np.maximum(da.array.astype(np.float64) * a.array.astype(np.float64), 0.0).mean(axis=0)
        r = r + abar @ r
    grid = r[0, 1:].reshape(cfg.grid, cfg.grid)
    return _finish(grid, cfg.image_size, "chefer")


def compute_map(captures: CaptureSet, method: str, head_agg: str | int = "mean") -> SaliencyMap:
    if method == "attention":
        return attention_cls_map(captures, head_agg=head_agg)
    if method == "gradcam":
        return gradcam_map(captures)
    if method == "chefer":
        return chefer_map(captures)
    raise ValueError(f"unknown method {method!r}, expected one of {METHODS}")
