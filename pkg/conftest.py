from pathlib import Path

import numpy as np
import pytest

from panoptic_nav.config import use_settings
from panoptic_nav.models.masks import BitMask
from panoptic_nav.models.panoptic import InstancePrediction, PanopticMap
from panoptic_nav.services.label_schema import default_schema, load_schema

VOID, ROAD, SIDEWALK, CAR, PERSON = 0, 1, 2, 3, 4

TINY_SCHEMA_DOCUMENT = {
    "void_id": VOID,
    "classes": [
        {"id": VOID, "name": "void", "is_thing": False, "weight": 0.0, "color": [0, 0, 0]},
        {"id": ROAD, "name": "road", "is_thing": False, "weight": 0.0, "color": [128, 64, 128]},
        {"id": SIDEWALK, "name": "sidewalk", "is_thing": False, "weight": 0.0, "color": [244, 35, 232]},
        {"id": CAR, "name": "car", "is_thing": True, "weight": 2.0, "color": [0, 0, 142]},
        {"id": PERSON, "name": "person", "is_thing": True, "weight": 1.0, "color": [220, 20, 60]},
    ],
}


@pytest.fixture(autouse=True)
def environment_settings():
    """Every test starts from environment settings and leaves no override behind."""
    use_settings(None)
    yield
    use_settings(None)


@pytest.fixture
def schema():
    return default_schema()


@pytest.fixture
def tiny_schema():
    return load_schema(TINY_SCHEMA_DOCUMENT)


def make_instance(class_id: int, confidence: float, bits) -> InstancePrediction:
    return InstancePrediction(class_id=class_id, confidence=confidence, mask=BitMask.from_array(bits))


def rect(height: int, width: int, y0: int, x0: int, y1: int, x1: int) -> np.ndarray:
    """Boolean plane with the inclusive rectangle (y0..y1, x0..x1) set."""
    bits = np.zeros((height, width), dtype=bool)
    bits[y0:y1 + 1, x0:x1 + 1] = True
    return bits


def random_panoptic_pair(rng: np.random.Generator, size: int = 16, max_segments: int = 6):
    """
    Ground truth painted from rectangles and a prediction that perturbs it.

    Labels are (class, instance) pairs over the tiny schema; stuff keeps
    instance 0 and every thing instance id belongs to exactly one class.
    """
    def labels():
        count = int(rng.integers(1, max_segments + 1))
        chosen = []
        next_id = 1
        for _ in range(count):
            class_id = int(rng.choice([VOID, ROAD, SIDEWALK, CAR, PERSON]))
            if class_id in (CAR, PERSON):
                chosen.append((class_id, next_id))
                next_id += 1
            else:
                chosen.append((class_id, 0))
        return chosen

    def paint(choices):
        classes = np.full((size, size), choices[0][0], dtype=np.int32)
        instances = np.full((size, size), choices[0][1], dtype=np.int32)
        for class_id, instance_id in choices[1:]:
            y0, x0 = (int(v) for v in rng.integers(0, size, 2))
            y1, x1 = (int(v) for v in rng.integers(0, size, 2))
            ys, ye = sorted((y0, y1))
            xs, xe = sorted((x0, x1))
            classes[ys:ye + 1, xs:xe + 1] = class_id
            instances[ys:ye + 1, xs:xe + 1] = instance_id
        return classes, instances

    gt_classes, gt_instances = paint(labels())
    pred_classes, pred_instances = gt_classes.copy(), gt_instances.copy()
    pred_labels = labels()
    flip = rng.random((size, size)) < rng.uniform(0.0, 0.6)
    picks = rng.integers(0, len(pred_labels), size=(size, size))
    for index, (class_id, instance_id) in enumerate(pred_labels):
        where = flip & (picks == index)
        # offset so predicted thing ids never collide with another class
        pred_classes[where] = class_id
        pred_instances[where] = instance_id + 100 if instance_id else 0
    return (
        PanopticMap.from_planes(pred_classes, pred_instances),
        PanopticMap.from_planes(gt_classes, gt_instances),
    )


GOLDEN_DIR = Path(__file__).resolve().parent / "panoptic_nav" / "data" / "golden"


def golden_bytes(filename: str) -> bytes:
    """Hex vector files are folded over several lines."""
    text = (GOLDEN_DIR / filename).read_text(encoding="utf-8")
    return bytes.fromhex("".join(text.split()))
