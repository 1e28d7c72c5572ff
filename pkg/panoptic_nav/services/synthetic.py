"""
Synthetic walking sequence for replay and tests.

A short campus walk sampled every 0.25 s: mixed poles, vehicles and people at
the start, poles dominating halfway, more vehicles on the way back. Each frame
has RGB, semantic, depth and instance planes (and optionally a ground-truth
panoptic plane); all content is drawn from a seeded generator.
"""

from typing import List, Optional, Sequence, Tuple

import numpy as np

from panoptic_nav.models.depth import DepthMap
from panoptic_nav.models.frame import Frame
from panoptic_nav.models.masks import BitMask, Box
from panoptic_nav.models.panoptic import InstancePrediction, PanopticMap, SemanticMap
from panoptic_nav.models.schema import LabelSchema
from panoptic_nav.services.mask_codec import bbox_of_mask
from panoptic_nav.services.renderer import class_palette

FRAME_INTERVAL_US = 250_000
DEFAULT_FRAMES = 40
DEFAULT_WIDTH = 160
DEFAULT_HEIGHT = 120

# (class name, relative frequency) per phase of the walk
PHASES: Sequence[Sequence[Tuple[str, float]]] = (
    (("pole", 1.0), ("car", 1.0), ("person", 1.0), ("bike", 0.4)),
    (("pole", 3.0), ("person", 0.5), ("traffic-light", 0.5)),
    (("car", 2.0), ("bus", 0.8), ("truck", 0.8), ("pole", 0.6), ("person", 0.4)),
)


def phase_of(index: int, total: int) -> int:
    return min(len(PHASES) - 1, index * len(PHASES) // max(total, 1))


def synthetic_sequence(schema: LabelSchema,
                       frames: int = DEFAULT_FRAMES,
                       width: int = DEFAULT_WIDTH,
                       height: int = DEFAULT_HEIGHT,
                       seed: int = 0,
                       with_ground_truth: bool = False,
                       max_instances: int = 6) -> List[Frame]:
    """Deterministic sequence of frames; frame k has id k and timestamp k * 250000 us."""
    rng = np.random.default_rng(seed)
    ground = _background(schema, width, height)
    sequence = []
    for index in range(frames):
        phase = PHASES[phase_of(index, frames)]
        names = [name for name, _ in phase if _has(schema, name)]
        weights = np.array([w for name, w in phase if _has(schema, name)], dtype=np.float64)
        count = int(rng.integers(1, max_instances + 1)) if names else 0
        picks = rng.choice(len(names), size=count, p=weights / weights.sum()) if count else []
        sequence.append(_frame(schema, index, ground, [names[i] for i in picks], rng, with_ground_truth))
    return sequence


def _has(schema: LabelSchema, name: str) -> bool:
    try:
        schema.id_of(name)
        return True
    except KeyError:
        return False


def _background(schema: LabelSchema, width: int, height: int) -> np.ndarray:
    """Sky on top, buildings and vegetation in the middle band, sidewalk and road below."""
    ids = np.full((height, width), schema.void_id, dtype=np.int32)
    layout = (
        ("sky", slice(0, height // 3), slice(0, width)),
        ("building", slice(height // 3, height // 2), slice(0, width // 2)),
        ("vegetation", slice(height // 3, height // 2), slice(width // 2, width)),
        ("sidewalk", slice(height // 2, height), slice(0, width * 2 // 3)),
        ("road", slice(height // 2, height), slice(width * 2 // 3, width)),
    )
    for name, rows, cols in layout:
        if _has(schema, name):
            ids[rows, cols] = schema.id_of(name)
    return ids


def _frame(schema: LabelSchema, index: int, ground: np.ndarray, names: List[str],
           rng: np.random.Generator, with_ground_truth: bool) -> Frame:
    height, width = ground.shape
    semantic = ground.copy()
    rows = np.arange(height)[:, None]
    # farther near the horizon, closer at the bottom edge; sky has no return
    depths = np.broadcast_to(np.clip(12000 - rows * (10000 // height), 500, 12000), (height, width)).astype(np.uint16)
    if _has(schema, "sky"):
        depths = np.where(ground == schema.id_of("sky"), 0, depths).astype(np.uint16)

    instances: List[InstancePrediction] = []
    gt_class = np.full((height, width), schema.void_id, dtype=np.int32)
    gt_instance = np.zeros((height, width), dtype=np.int32)
    for name in names:
        class_id = schema.id_of(name)
        box = _box_for(name, width, height, rng)
        bits = np.zeros((height, width), dtype=bool)
        bits[box.y_min:box.y_max + 1, box.x_min:box.x_max + 1] = True
        semantic[bits] = class_id
        distance = int(rng.integers(800, 9000))
        depths = np.where(bits, distance, depths).astype(np.uint16)
        confidence = round(float(rng.uniform(0.3, 0.99)), 6)
        mask = BitMask(width=width, height=height, bits=bits)
        instances.append(InstancePrediction(
            class_id=class_id, confidence=confidence, mask=mask, box=bbox_of_mask(mask)
        ))
        free = bits & (gt_instance == 0)
        if free.any():
            gt_class[free] = class_id
            gt_instance[free] = int(gt_instance.max()) + 1

    stuff = np.isin(semantic, np.asarray(schema.stuff_ids)) & (gt_instance == 0)
    gt_class[stuff] = semantic[stuff]
    panoptic: Optional[PanopticMap] = PanopticMap.from_planes(gt_class, gt_instance) if with_ground_truth else None

    palette = class_palette(schema)
    noise = rng.integers(-12, 13, size=(height, width, 3))
    rgb = np.clip(palette[semantic].astype(np.int64) + noise, 0, 255).astype(np.uint8)

    return Frame(
        frame_id=index,
        timestamp_us=index * FRAME_INTERVAL_US,
        width=width,
        height=height,
        rgb=rgb,
        semantic=SemanticMap(width=width, height=height, ids=semantic),
        depth=DepthMap(width=width, height=height, depths=depths),
        panoptic=panoptic,
        instances=instances,
    )


def _box_for(name: str, width: int, height: int, rng: np.random.Generator) -> Box:
    """Tall thin boxes for poles and people, wide ones for vehicles, all standing on the ground band."""
    if name in ("pole", "traffic-light"):
        w, h = max(2, width // 40), max(6, height // 2)
    elif name in ("person", "bike"):
        w, h = max(3, width // 16), max(6, height // 4)
    else:
        w, h = max(6, width // 5), max(4, height // 5)
    w, h = min(w, width), min(h, height)
    x0 = int(rng.integers(0, width - w + 1))
    bottom = int(rng.integers(height // 2, height))
    y0 = max(0, bottom - h + 1)
    return Box(x_min=x0, y_min=y0, x_max=x0 + w - 1, y_max=bottom)
