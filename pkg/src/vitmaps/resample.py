"""Bilinear resampling (align-corners-false, edge-clamped)."""

from __future__ import annotations

import numpy as np


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Resize the last two axes of ``img`` to (out_h, out_w).

    Uses the half-pixel-center convention: source coordinate of output pixel
    ``p`` is ``(p + 0.5) * in/out - 0.5``, with source indices clamped at the
    edges.  A constant image stays constant.  Interpolation weights are
    computed in float64; the result keeps the input's float dtype.
    """
    if out_h < 1 or out_w < 1:
        raise ValueError(f"target size must be positive, got {out_h}x{out_w}")
    in_h, in_w = img.shape[-2], img.shape[-1]
    out_dtype = img.dtype if img.dtype in (np.float32, np.float64) else np.float64

    src_y = (np.arange(out_h, dtype=np.float64) + 0.5) * (in_h / out_h) - 0.5
    src_x = (np.arange(out_w, dtype=np.float64) + 0.5) * (in_w / out_w) - 0.5
    y0 = np.floor(src_y)
    x0 = np.floor(src_x)
    ty = (src_y - y0).reshape(-1, 1)
    tx = (src_x - x0).reshape(1, -1)
    y0c = np.clip(y0.astype(np.int64), 0, in_h - 1)
    y1c = np.clip(y0.astype(np.int64) + 1, 0, in_h - 1)
    x0c = np.clip(x0.astype(np.int64), 0, in_w - 1)
    x1c = np.clip(x0.astype(np.int64) + 1, 0, in_w - 1)

    a = img[..., y0c[:, None], x0c[None, :]]
    b = img[..., y0c[:, None], x1c[None, :]]
    c = img[..., y1c[:, None], x0c[None, :]]
    d = img[..., y1c[:, None], x1c[None, :]]
    top = a * (1 - tx) + b * tx
    bot = c * (1 - tx) + d * tx
    return (top * (1 - ty) + bot * ty).astype(out_dtype)
