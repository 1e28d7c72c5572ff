import numpy as np
import pytest

from conftest import rect
from panoptic_nav.models.masks import BitMask, Box, RleMask
from panoptic_nav.services.mask_codec import (
    bbox_of_mask, box_iou, fill_box, mask_iou, rle_decode, rle_encode, rle_from_text, rle_to_text
)
from panoptic_nav.utils.exceptions import DimensionMismatchException, MalformedMaskException


def mask(rows):
    return BitMask.from_array(np.array(rows, dtype=bool))


@pytest.mark.parametrize("rows, runs", [
    ([[0, 0], [0, 0]], (4,)),
    ([[1, 1], [1, 1]], (0, 4)),
    ([[0, 1], [1, 0]], (1, 2, 1)),
])
def test_rle_encode_row_major(rows, runs):
    assert rle_encode(mask(rows)).runs == runs


def test_rle_decode_examples():
    assert not rle_decode(RleMask(width=2, height=2, runs=(4,))).bits.any()
    assert rle_decode(RleMask(width=2, height=2, runs=(1, 2, 1))) == mask([[0, 1], [1, 0]])


@pytest.mark.parametrize("runs", [(3,), (1, 0, 3), (), (-1, 5)])
def test_rle_decode_rejects_malformed_runs(runs):
    with pytest.raises(MalformedMaskException):
        rle_decode(RleMask(width=2, height=2, runs=runs))


def test_rle_round_trip_random_masks():
    rng = np.random.default_rng(7)
    for _ in range(300):
        h, w = (int(v) for v in rng.integers(1, 12, 2))
        bits = rng.random((h, w)) < rng.uniform(0, 1)
        m = BitMask.from_array(bits)
        rle = rle_encode(m)
        assert sum(rle.runs) == h * w
        assert all(r > 0 for r in rle.runs[1:])
        assert rle_decode(rle) == m
        assert rle_encode(rle_decode(rle)) == rle


def test_rle_text_form():
    rle = rle_encode(mask([[0, 1], [1, 0]]))
    assert rle_to_text(rle) == "2 2: 1 2 1"
    assert rle_from_text("2 2: 1 2 1") == rle
    with pytest.raises(MalformedMaskException):
        rle_from_text("2 2: 1 2")
    with pytest.raises(MalformedMaskException):
        rle_from_text("two by two")


def test_mask_iou_examples():
    full = mask([[1, 1], [1, 1]])
    top = mask([[1, 1], [0, 0]])
    bottom = mask([[0, 0], [1, 1]])
    empty = mask([[0, 0], [0, 0]])
    assert mask_iou(full, full) == 1.0
    assert mask_iou(top, bottom) == 0.0
    assert mask_iou(top, full) == 0.5
    assert mask_iou(empty, empty) == 0.0


def test_mask_iou_dimension_mismatch():
    with pytest.raises(DimensionMismatchException):
        mask_iou(mask([[1, 1]]), mask([[1], [1]]))


def test_mask_iou_properties_against_pixel_counts():
    rng = np.random.default_rng(11)
    for _ in range(200):
        a = rng.random((6, 7)) < 0.5
        b = rng.random((6, 7)) < 0.5
        ma, mb = BitMask.from_array(a), BitMask.from_array(b)
        union = np.count_nonzero(a | b)
        expected = np.count_nonzero(a & b) / union if union else 0.0
        assert mask_iou(ma, mb) == pytest.approx(expected, abs=1e-12)
        assert mask_iou(ma, mb) == mask_iou(mb, ma)
        if a.any():
            assert mask_iou(ma, ma) == 1.0
        if (a & b).any():
            assert mask_iou(BitMask.from_array(a & b), mb) >= mask_iou(ma, mb)


def test_box_iou_examples():
    a = Box(x_min=0, y_min=0, x_max=1, y_max=1)
    assert box_iou(a, a) == 1.0
    assert box_iou(a, Box(x_min=5, y_min=5, x_max=6, y_max=6)) == 0.0
    assert box_iou(a, Box(x_min=1, y_min=1, x_max=2, y_max=2)) == pytest.approx(1 / 7)


def test_box_iou_equals_mask_iou_of_filled_boxes():
    rng = np.random.default_rng(3)
    for _ in range(100):
        boxes = []
        for _ in range(2):
            x0, x1 = sorted(int(v) for v in rng.integers(0, 10, 2))
            y0, y1 = sorted(int(v) for v in rng.integers(0, 10, 2))
            boxes.append(Box(x_min=x0, y_min=y0, x_max=x1, y_max=y1))
        filled = [fill_box(b, 10, 10) for b in boxes]
        assert box_iou(*boxes) == pytest.approx(mask_iou(*filled), abs=1e-12)


def test_bbox_of_mask():
    single = BitMask.from_array(rect(8, 8, 3, 5, 3, 5))
    assert bbox_of_mask(single) == Box(x_min=5, y_min=3, x_max=5, y_max=3)
    full = BitMask.from_array(np.ones((4, 6), dtype=bool))
    assert bbox_of_mask(full) == Box(x_min=0, y_min=0, x_max=5, y_max=3)
    assert bbox_of_mask(BitMask.from_array(np.zeros((4, 6), dtype=bool))) is None


@pytest.mark.slow
def test_rle_round_trip_sweep():
    rng = np.random.default_rng(10_000)
    for _ in range(10_000):
        h, w = (int(v) for v in rng.integers(1, 33, 2))
        m = BitMask.from_array(rng.random((h, w)) < rng.uniform(0, 1))
        rle = rle_encode(m)
        assert rle_decode(rle) == m
        assert rle_encode(rle_decode(rle)) == rle
