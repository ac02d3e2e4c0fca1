"""Budget-controlled semi-dense pixel selection with the FAST-9 segment test.

A pixel is selected when at least 9 contiguous pixels of the radius-3
Bresenham circle around it are all brighter than ``center + t`` or all darker
than ``center - t``. No non-maximum suppression is applied. The threshold
``t`` is adjusted multiplicatively until the number of selected pixels with
valid depth falls inside ``[target_min, target_max]``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError

log = logging.getLogger(__name__)

# (dx, dy) around the circle, clockwise from 12 o'clock
CIRCLE = (
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)
ARC = 9


@dataclass(frozen=True)
class SelectorConfig:
    target_min: int = 3000
    target_max: int = 15000
    initial_threshold: float = 20.0
    adjust_factor: float = 1.5
    min_threshold: float = 1.0
    max_rounds: int = 20

    def __post_init__(self):
        if not 0 < self.target_min < self.target_max:
            raise InvalidArgumentError(
                f"need 0 < target_min < target_max, got {self.target_min}, {self.target_max}"
            )
        if not self.adjust_factor > 1:
            raise InvalidArgumentError(f"adjust_factor must be > 1, got {self.adjust_factor}")
        if not 0 < self.min_threshold <= self.initial_threshold:
            raise InvalidArgumentError("need 0 < min_threshold <= initial_threshold")


def to_gray(rgb: np.ndarray) -> np.ndarray:
    img = np.asarray(rgb, dtype=float)
    if img.ndim == 2:
        return img
    return img[..., 0] * 0.299 + img[..., 1] * 0.587 + img[..., 2] * 0.114


def fast_corners(gray: np.ndarray, threshold: float) -> np.ndarray:
    """Boolean mask of FAST-9 corners; the 3-pixel border is never selected."""
    img = np.asarray(gray, dtype=float)
    H, W = img.shape
    mask = np.zeros((H, W), dtype=bool)
    if H < 7 or W < 7:
        return mask
    center = img[3 : H - 3, 3 : W - 3]
    hi = center + threshold
    lo = center - threshold
    ring = [img[3 + dy : H - 3 + dy, 3 + dx : W - 3 + dx] for dx, dy in CIRCLE]
    found = np.zeros(center.shape, dtype=bool)
    for test in (lambda s: s > hi, lambda s: s < lo):
        flags = [test(s) for s in ring]
        run = np.zeros(center.shape, dtype=np.int16)
        for k in range(len(CIRCLE) + ARC - 1):
            f = flags[k % len(CIRCLE)]
            run = np.where(f, run + 1, 0)
            found |= run >= ARC
    mask[3 : H - 3, 3 : W - 3] = found
    return mask


def select_points(rgb: np.ndarray, depth_mask: np.ndarray, sel: SelectorConfig):
    """Return ``(rows, cols)`` of selected pixels, a subset of ``depth_mask``."""
    gray = to_gray(rgb)
    depth_mask = np.asarray(depth_mask, dtype=bool)
    if gray.shape != depth_mask.shape:
        raise InvalidArgumentError(f"image {gray.shape} and depth mask {depth_mask.shape} differ")

    tried: dict[float, np.ndarray] = {}

    def corners_at(t):
        if t not in tried:
            tried[t] = fast_corners(gray, t) & depth_mask
        return tried[t]

    def gap(n):
        return max(sel.target_min - n, n - sel.target_max, 0)

    t = sel.initial_threshold
    factor = sel.adjust_factor
    last_dir = 0
    for _ in range(sel.max_rounds):
        n = int(corners_at(t).sum())
        if sel.target_min <= n <= sel.target_max:
            return np.nonzero(corners_at(t))
        direction = 1 if n > sel.target_max else -1
        if last_dir and direction != last_dir:
            factor = math.sqrt(factor)
        last_dir = direction
        if direction < 0 and t <= sel.min_threshold:
            break
        t = t * factor if direction > 0 else max(t / factor, sel.min_threshold)

    at_min = corners_at(sel.min_threshold) if t <= sel.min_threshold else None
    if at_min is not None and at_min.sum() < sel.target_min:
        log.warning("only %d corners with valid depth at the minimum threshold; using all %d valid pixels",
                    int(at_min.sum()), int(depth_mask.sum()))
        return np.nonzero(depth_mask)
    best = min(tried, key=lambda k: (gap(int(tried[k].sum())), k))
    log.warning("threshold control did not reach [%d, %d]; using t=%.4g with %d pixels",
                sel.target_min, sel.target_max, best, int(tried[best].sum()))
    return np.nonzero(tried[best])
