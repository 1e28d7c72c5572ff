"""
Run-length codec and geometric primitives for binary masks.

Runs are counted in ROW-MAJOR order (left to right, then top to bottom), matching
the raster order of every other plane. Dataset toolkits that count column-major
produce different run lists for the same mask.
"""

import struct
from typing import Optional, Sequence

import numpy as np

from panoptic_nav.models.masks import BitMask, Box, RleMask
from panoptic_nav.utils.exceptions import DimensionMismatchException, MalformedMaskException


def rle_encode(mask: BitMask) -> RleMask:
    """Canonical row-major run-length encoding; always starts with a zero-run."""
    return RleMask(width=mask.width, height=mask.height, runs=tuple(_runs_of(mask.bits.ravel())))


def rle_decode(rle: RleMask) -> BitMask:
    """Inverse of rle_encode; rejects runs that break the encoding invariants."""
    check_runs(rle.runs, rle.width * rle.height)
    runs = np.asarray(rle.runs, dtype=np.int64)
    values = (np.arange(runs.shape[0]) % 2).astype(bool)
    bits = np.repeat(values, runs).reshape(rle.height, rle.width)
    return BitMask(width=rle.width, height=rle.height, bits=bits)


def check_runs(runs: Sequence[int], expected_total: int) -> None:
    if len(runs) == 0:
        raise MalformedMaskException("Run list is empty")
    if any(r < 0 for r in runs):
        raise MalformedMaskException("Run lengths must be non-negative")
    if any(r == 0 for r in runs[1:]):
        raise MalformedMaskException("Only the leading zero-run may have length 0")
    total = sum(runs)
    if total != expected_total:
        raise MalformedMaskException(f"Runs sum to {total}, mask has {expected_total} pixels")


def rle_to_text(rle: RleMask) -> str:
    """Fixture text form: 'W H: c0 c1 c2 ...'."""
    return f"{rle.width} {rle.height}: " + " ".join(str(r) for r in rle.runs)


def rle_from_text(text: str) -> RleMask:
    try:
        header, counts = text.split(":", 1)
        width, height = (int(v) for v in header.split())
        runs = tuple(int(v) for v in counts.split())
    except ValueError:
        raise MalformedMaskException(f"Malformed RLE text: {text!r}")
    check_runs(runs, width * height)
    return RleMask(width=width, height=height, runs=runs)


def encoded_mask_bytes(mask: BitMask) -> bytes:
    """Little-endian u32 runs of the canonical encoding; used as a sort tie-breaker."""
    runs = _runs_of(mask.bits.ravel())
    return struct.pack(f"<{len(runs)}I", *runs)


def mask_iou(a: BitMask, b: BitMask) -> float:
    """|a & b| / |a | b|, defined as 0 when both masks are empty."""
    if a.bits.shape != b.bits.shape:
        raise DimensionMismatchException("mask", a.bits.shape, b.bits.shape)
    union = np.count_nonzero(a.bits | b.bits)
    if union == 0:
        return 0.0
    return np.count_nonzero(a.bits & b.bits) / union


def box_iou(a: Box, b: Box) -> float:
    """IoU over inclusive pixel boxes."""
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min) + 1
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min) + 1
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def bbox_of_mask(mask: BitMask) -> Optional[Box]:
    """Tight inclusive bounds of the set pixels; None for an empty mask."""
    rows = np.flatnonzero(mask.bits.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(mask.bits.any(axis=0))
    return Box(x_min=int(cols[0]), y_min=int(rows[0]), x_max=int(cols[-1]), y_max=int(rows[-1]))


def fill_box(box: Box, width: int, height: int) -> BitMask:
    bits = np.zeros((height, width), dtype=bool)
    bits[box.y_min:box.y_max + 1, box.x_min:box.x_max + 1] = True
    return BitMask(width=width, height=height, bits=bits)


def _runs_of(flat: np.ndarray) -> list:
    n = flat.shape[0]
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [n]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return runs
