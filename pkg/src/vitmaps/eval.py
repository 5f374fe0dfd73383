"""Pointing game and IoU-overlap evaluation of saliency maps against
bounding-box annotations.

Conventions, fixed once and used everywhere:
  * boxes are half-open integer pixel rectangles [x0, x1) x [y0, y1);
  * argmax ties break to the lowest row-major index;
  * the top-k percentile threshold is nearest-rank on a descending sort with
    a >= comparison, so ties can only enlarge the mask;
  * IoU is computed box-vs-box (tightest box around the mask vs annotation);
    mask-vs-box is available as an explicit opt-in;
  * quartiles use linear interpolation between order statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class AnnotationBox:
    """Half-open pixel rectangle; (x0, y0) inclusive, (x1, y1) exclusive."""

    x0: int
    y0: int
    x1: int
    y1: int
    frame: str = "original"  # "original" or "model"

    def __post_init__(self):
        if not (0 <= self.x0 < self.x1 and 0 <= self.y0 < self.y1):
            raise ValueError(
                f"degenerate box ({self.x0}, {self.y0}, {self.x1}, {self.y1})"
            )
        if self.frame not in ("original", "model"):
            raise ValueError(f"unknown frame {self.frame!r}")

    @property
    def area(self) -> int:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def contains(self, row: int, col: int) -> bool:
        return self.y0 <= row < self.y1 and self.x0 <= col < self.x1

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x0, self.y0, self.x1, self.y1)


@dataclass(frozen=True)
class BinaryMask:
    """Pixel-resolution {0,1} grid; guaranteed non-empty."""

    grid: np.ndarray

    def __post_init__(self):
        if self.grid.dtype != bool or self.grid.ndim != 2:
            raise ValueError("mask must be a 2-d boolean array")
        if not self.grid.any():
            raise ValueError("empty mask")

    @property
    def count(self) -> int:
        return int(self.grid.sum())


@dataclass(frozen=True)
class EvalResult:
    image_id: str
    method: str
    hit: bool
    iou: float
    argmax: tuple[int, int]  # (row, col)
    predicted_box: AnnotationBox
    gt_box: AnnotationBox


def pointing_game(map_pixels: np.ndarray, box: AnnotationBox) -> tuple[bool, tuple[int, int]]:
    """Hit iff the map's maximal pixel lies inside the box."""
    m = np.asarray(map_pixels)
    flat_idx = int(np.argmax(m))  # first occurrence = lowest row-major index
    row, col = divmod(flat_idx, m.shape[1])
    return box.contains(row, col), (row, col)


def pointing_accuracy(results: Iterable[EvalResult]) -> float:
    results = list(results)
    if not results:
        raise ValueError("pointing_accuracy of an empty result list")
    hits = sum(1 for r in results if r.hit)
    return hits / len(results)


def threshold_top_percentile(map_pixels: np.ndarray, k: float = 5.0) -> BinaryMask:
    """Select pixels >= the top-k-percent nearest-rank value.

    With pairwise-distinct values the mask has exactly ceil(k/100 * N)
    pixels; ties can enlarge it.
    """
    if not 0 < k < 100:
        raise ValueError(f"k must be in (0, 100), got {k}")
    m = np.asarray(map_pixels)
    n = m.size
    rank = math.ceil(k * n / 100.0)  # 1-based rank in descending order
    p_k = np.partition(m.reshape(-1), n - rank)[n - rank]
    return BinaryMask(grid=(m >= p_k))


def tightest_bbox(mask: BinaryMask | np.ndarray) -> AnnotationBox:
    """Smallest box covering every set pixel (model frame)."""
    grid = mask.grid if isinstance(mask, BinaryMask) else np.asarray(mask, dtype=bool)
    rows, cols = np.nonzero(grid)
    if rows.size == 0:
        raise ValueError("tightest_bbox of an empty mask")
    return AnnotationBox(
        x0=int(cols.min()), y0=int(rows.min()),
        x1=int(cols.max()) + 1, y1=int(rows.max()) + 1,
        frame="model",
    )


def box_iou(a: AnnotationBox, b: AnnotationBox) -> float:
    """Intersection-over-union of two half-open boxes; 0 when disjoint."""
    iw = min(a.x1, b.x1) - max(a.x0, b.x0)
    ih = min(a.y1, b.y1) - max(a.y0, b.y0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def mask_box_iou(mask: BinaryMask, box: AnnotationBox) -> float:
    """Mask-vs-box IoU; not the default protocol, kept as an explicit option."""
    grid = mask.grid
    box_grid = np.zeros_like(grid)
    box_grid[box.y0 : box.y1, box.x0 : box.x1] = True
    inter = int((grid & box_grid).sum())
    union = int((grid | box_grid).sum())
    return inter / union


def evaluate_sample(
    map_pixels: np.ndarray,
    box: AnnotationBox,
    k: float = 5.0,
    image_id: str = "",
    method: str = "",
    mask_iou: bool = False,
) -> EvalResult:
    """Full per-sample protocol: pointing game, threshold, tightest box, IoU."""
    hit, argmax = pointing_game(map_pixels, box)
    mask = threshold_top_percentile(map_pixels, k=k)
    pred = tightest_bbox(mask)
    iou = mask_box_iou(mask, box) if mask_iou else box_iou(pred, box)
    return EvalResult(
        image_id=image_id, method=method, hit=hit, iou=iou,
        argmax=argmax, predicted_box=pred, gt_box=box,
    )


@dataclass(frozen=True)
class MethodSummary:
    n: int
    pointing_accuracy: float
    iou_mean: float
    iou_min: float
    iou_q1: float
    iou_median: float
    iou_q3: float
    iou_max: float

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "pointing_accuracy": self.pointing_accuracy,
            "iou_mean": self.iou_mean,
            "iou_min": self.iou_min,
            "iou_q1": self.iou_q1,
            "iou_median": self.iou_median,
            "iou_q3": self.iou_q3,
            "iou_max": self.iou_max,
        }


def _quantile_linear(sorted_vals: np.ndarray, q: float) -> float:
    """Linear interpolation between order statistics (box-plot convention)."""
    n = sorted_vals.size
    pos = q * (n - 1)
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    t = pos - lo
    return float(sorted_vals[lo] + (sorted_vals[hi] - sorted_vals[lo]) * t)


def aggregate(results: Iterable[EvalResult]) -> dict[str, MethodSummary]:
    """Group by method; summarize pointing accuracy and the IoU distribution."""
    groups: dict[str, list[EvalResult]] = {}
    for r in results:
        groups.setdefault(r.method, []).append(r)
    if not groups:
        raise ValueError("aggregate of an empty result list")
    out: dict[str, MethodSummary] = {}
    for method in sorted(groups):
        rs = groups[method]
        ious = np.sort(np.asarray([r.iou for r in rs], dtype=np.float64))
        out[method] = MethodSummary(
            n=len(rs),
            pointing_accuracy=pointing_accuracy(rs),
            iou_mean=float(ious.mean()),
            iou_min=float(ious[0]),
            iou_q1=_quantile_linear(ious, 0.25),
            iou_median=_quantile_linear(ious, 0.5),
            iou_q3=_quantile_linear(ious, 0.75),
            iou_max=float(ious[-1]),
        )
    return out
