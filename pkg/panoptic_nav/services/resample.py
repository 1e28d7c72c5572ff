"""
Resampling of label planes and masks for resolution sweeps.

'nearest' picks the source pixel under each target pixel center. 'bilinear' never
blends labels: it keeps the label with the largest summed bilinear weight among the
four neighbors (lowest id on ties), and for masks sets a pixel when the interpolated
value is at least 0.5.
"""

from typing import Literal, Tuple

import numpy as np

from panoptic_nav.models.masks import BitMask, Box
from panoptic_nav.models.panoptic import InstancePrediction, PanopticMap, SemanticMap

ResampleMethod = Literal["nearest", "bilinear"]


def resample_labels(plane: np.ndarray, height: int, width: int, method: ResampleMethod = "nearest") -> np.ndarray:
    src_h, src_w = plane.shape
    if (src_h, src_w) == (height, width):
        return plane.copy()
    if method == "nearest":
        rows = _nearest_index(src_h, height)
        cols = _nearest_index(src_w, width)
        return plane[np.ix_(rows, cols)]

    (r0, r1, wr), (c0, c1, wc) = _bilinear_axis(src_h, height), _bilinear_axis(src_w, width)
    corners = [
        (plane[np.ix_(r0, c0)], np.outer(1 - wr, 1 - wc)),
        (plane[np.ix_(r0, c1)], np.outer(1 - wr, wc)),
        (plane[np.ix_(r1, c0)], np.outer(wr, 1 - wc)),
        (plane[np.ix_(r1, c1)], np.outer(wr, wc)),
    ]
    best_label = corners[0][0].copy()
    best_weight = np.full((height, width), -1.0)
    for label, _ in corners:
        total = sum(np.where(other == label, weight, 0.0) for other, weight in corners)
        better = (total > best_weight) | ((total == best_weight) & (label < best_label))
        best_label = np.where(better, label, best_label)
        best_weight = np.where(better, total, best_weight)
    return best_label.astype(plane.dtype)


def resample_mask(mask: BitMask, height: int, width: int, method: ResampleMethod = "nearest") -> BitMask:
    if method == "nearest":
        bits = resample_labels(mask.bits, height, width, "nearest")
    else:
        src = mask.bits.astype(np.float64)
        (r0, r1, wr), (c0, c1, wc) = _bilinear_axis(mask.height, height), _bilinear_axis(mask.width, width)
        value = (
            src[np.ix_(r0, c0)] * np.outer(1 - wr, 1 - wc)
            + src[np.ix_(r0, c1)] * np.outer(1 - wr, wc)
            + src[np.ix_(r1, c0)] * np.outer(wr, 1 - wc)
            + src[np.ix_(r1, c1)] * np.outer(wr, wc)
        )
        bits = value >= 0.5
    return BitMask(width=width, height=height, bits=bits)


def resample_semantic(semantic: SemanticMap, height: int, width: int,
                      method: ResampleMethod = "nearest") -> SemanticMap:
    return SemanticMap.from_array(resample_labels(semantic.ids, height, width, method))


def resample_panoptic(panoptic: PanopticMap, height: int, width: int,
                      method: ResampleMethod = "nearest") -> PanopticMap:
    """Resample the packed (class, instance) plane so pairs are never split."""
    packed = resample_labels(panoptic.packed(), height, width, method)
    return PanopticMap.from_packed(packed)


def resample_instance(instance: InstancePrediction, height: int, width: int,
                      method: ResampleMethod = "nearest") -> InstancePrediction:
    """Resampled prediction; a predicted box is scaled onto the target grid, never re-derived."""
    src_h, src_w = instance.mask.height, instance.mask.width
    if (src_h, src_w) == (height, width):
        return instance
    mask = resample_mask(instance.mask, height, width, method)
    if not mask.bits.any():
        # keep a single pixel so tiny proposals survive downscaling
        row, col = np.argwhere(instance.mask.bits)[0]
        bits = np.zeros((height, width), dtype=bool)
        bits[min(height - 1, row * height // src_h), min(width - 1, col * width // src_w)] = True
        mask = BitMask(width=width, height=height, bits=bits)
    box = None if instance.box is None else scale_box(instance.box, src_h, src_w, height, width)
    return InstancePrediction(class_id=instance.class_id, confidence=instance.confidence, mask=mask, box=box)


def scale_box(box: Box, src_h: int, src_w: int, height: int, width: int) -> Box:
    """Inclusive box covering the same area on a height x width grid."""
    x_min = min(width - 1, box.x_min * width // src_w)
    y_min = min(height - 1, box.y_min * height // src_h)
    # ceil((max + 1) * dst / src) - 1
    x_max = min(width - 1, max(x_min, -(-(box.x_max + 1) * width // src_w) - 1))
    y_max = min(height - 1, max(y_min, -(-(box.y_max + 1) * height // src_h) - 1))
    return Box(x_min=x_min, y_min=y_min, x_max=x_max, y_max=y_max)


def _nearest_index(src: int, dst: int) -> np.ndarray:
    centers = (np.arange(dst) + 0.5) * src / dst
    return np.minimum(np.floor(centers).astype(np.int64), src - 1)


def _bilinear_axis(src: int, dst: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    position = np.clip((np.arange(dst) + 0.5) * src / dst - 0.5, 0.0, src - 1)
    lower = np.floor(position).astype(np.int64)
    upper = np.minimum(lower + 1, src - 1)
    return lower, upper, position - lower
