"""
PNG overlays of panoptic frames: class colors, instance boundaries and distance labels.
"""

import colorsys
from pathlib import Path
from typing import List, Tuple

import numpy as np
from PIL import Image, ImageDraw

from panoptic_nav.models.frame import Frame
from panoptic_nav.models.panoptic import PanopticMap
from panoptic_nav.models.schema import LabelSchema
from panoptic_nav.services.depth_stats import segment_stats
from panoptic_nav.utils.exceptions import MissingPlaneException, UsageException
from panoptic_nav.utils.logger import get_logger

logger = get_logger(__name__)

GOLDEN_RATIO_CONJUGATE = 0.618033988749895
LABEL_COLOR = (255, 255, 255)


def class_palette(schema: LabelSchema) -> np.ndarray:
    """Lookup table class_id -> RGB."""
    palette = np.zeros((max(schema.ids) + 1, 3), dtype=np.uint8)
    for class_def in schema.classes:
        palette[class_def.id] = class_def.color
    return palette


def instance_color(instance_id: int) -> Tuple[int, int, int]:
    """Boundary color: hue rotated by the golden ratio per instance id."""
    hue = (instance_id * GOLDEN_RATIO_CONJUGATE) % 1.0
    r, g, b = colorsys.hsv_to_rgb(hue, 0.85, 1.0)
    return int(round(r * 255)), int(round(g * 255)), int(round(b * 255))


def boundary_mask(instance_ids: np.ndarray) -> np.ndarray:
    """Instance pixels with a 4-neighbor of another id; the image border is not a boundary."""
    edge = np.zeros(instance_ids.shape, dtype=bool)
    horizontal = instance_ids[:, 1:] != instance_ids[:, :-1]
    vertical = instance_ids[1:, :] != instance_ids[:-1, :]
    edge[:, 1:] |= horizontal
    edge[:, :-1] |= horizontal
    edge[1:, :] |= vertical
    edge[:-1, :] |= vertical
    return edge & (instance_ids > 0)


def render_frame(frame: Frame, schema: LabelSchema, alpha: float = 0.5, labels: bool = True) -> Image.Image:
    """
    Render one frame as an 8-bit RGB image.

    Class colors are alpha-blended over the RGB plane when the frame has one;
    without it the class colors are drawn as they are.
    """
    if not 0.0 <= alpha <= 1.0:
        raise UsageException(f"alpha must lie in [0, 1], got {alpha}")
    panoptic = _panoptic_of(frame)
    palette = class_palette(schema)
    class_ids = np.clip(panoptic.class_ids, 0, palette.shape[0] - 1)
    colors = palette[class_ids].astype(np.float64)

    if frame.rgb is not None:
        colors = alpha * colors + (1.0 - alpha) * frame.rgb.astype(np.float64)
    image = np.rint(colors).astype(np.uint8)

    edges = boundary_mask(panoptic.instance_ids)
    if edges.any():
        ids = np.unique(panoptic.instance_ids[edges])
        lut = np.zeros((int(ids.max()) + 1, 3), dtype=np.uint8)
        for instance_id in ids:
            lut[instance_id] = instance_color(int(instance_id))
        image[edges] = lut[panoptic.instance_ids[edges]]

    picture = Image.fromarray(image)
    if labels and frame.depth is not None:
        _draw_distance_labels(picture, panoptic, frame, schema)
    return picture


def render_sequence(frames, out_dir, schema: LabelSchema, alpha: float = 0.5, labels: bool = True) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    for frame in frames:
        path = out / f"{frame.frame_id:08d}.png"
        render_frame(frame, schema, alpha, labels).save(path, format="PNG")
        written.append(path)
    logger.info(f"Rendered {len(written)} frames to {out}")
    return written


def _panoptic_of(frame: Frame) -> PanopticMap:
    if frame.panoptic is not None:
        return frame.panoptic
    if frame.semantic is not None:
        return PanopticMap.from_planes(frame.semantic.ids, np.zeros_like(frame.semantic.ids))
    raise MissingPlaneException(frame.frame_id, "panoptic")


def _draw_distance_labels(picture: Image.Image, panoptic: PanopticMap, frame: Frame, schema: LabelSchema) -> None:
    draw = ImageDraw.Draw(picture)
    for info in segment_stats(panoptic, frame.depth):
        if info.instance_id == 0 or not schema.is_thing(info.class_id) or info.distance_mm is None:
            continue
        row, col = info.centroid
        draw.text((int(col), int(row)), _distance_label(info.distance_mm), fill=LABEL_COLOR)


def _distance_label(distance_mm: int) -> str:
    return f"{distance_mm / 1000:.1f}m"
