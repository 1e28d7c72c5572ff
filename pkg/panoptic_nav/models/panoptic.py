from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from panoptic_nav.models.base import ArrayModel
from panoptic_nav.models.masks import BitMask, Box

REFERENCE_AREA = 480 * 640
REFERENCE_MIN_STUFF_AREA = 4096
PANOPTIC_OFFSET = 65536


def _label_plane(value) -> np.ndarray:
    plane = np.asarray(value)
    if plane.dtype != np.int32:
        plane = plane.astype(np.int32)
    return plane


class SemanticMap(ArrayModel):
    """Per-pixel class ids, shape (height, width)."""

    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    ids: np.ndarray

    @field_validator("ids", mode="before")
    @classmethod
    def coerce_plane(cls, value) -> np.ndarray:
        return _label_plane(value)

    @model_validator(mode="after")
    def check_shape(self) -> "SemanticMap":
        if self.ids.shape != (self.height, self.width):
            raise ValueError(f"ids shape {self.ids.shape} does not match {self.height}x{self.width}")
        return self

    @classmethod
    def from_array(cls, ids) -> "SemanticMap":
        ids = _label_plane(ids)
        return cls(width=ids.shape[1], height=ids.shape[0], ids=ids)


class InstancePrediction(ArrayModel):
    """A ranked thing proposal: class, confidence, mask and optional box."""

    class_id: int = Field(..., ge=0, lt=65536)
    confidence: float = Field(..., ge=0.0, le=1.0)
    mask: BitMask
    box: Optional[Box] = None

    @model_validator(mode="after")
    def check_nonempty(self) -> "InstancePrediction":
        if not self.mask.bits.any():
            raise ValueError("instance mask is empty")
        return self


class GroundTruthInstance(ArrayModel):
    """A ground-truth thing instance used by average precision."""

    class_id: int = Field(..., ge=0, lt=65536)
    mask: BitMask
    box: Optional[Box] = None


class SegmentEntry(BaseModel):
    """Segment index row of a panoptic map."""

    model_config = ConfigDict(frozen=True)

    instance_id: int = Field(..., ge=1)
    class_id: int = Field(..., ge=0)
    area: int = Field(..., ge=1)


class PanopticMap(ArrayModel):
    """Per-pixel (class id, instance id) pairs plus the index of thing segments."""

    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    class_ids: np.ndarray
    instance_ids: np.ndarray
    segments: List[SegmentEntry] = Field(default_factory=list)

    @field_validator("class_ids", "instance_ids", mode="before")
    @classmethod
    def coerce_planes(cls, value) -> np.ndarray:
        return _label_plane(value)

    @model_validator(mode="after")
    def check_shape(self) -> "PanopticMap":
        shape = (self.height, self.width)
        if self.class_ids.shape != shape or self.instance_ids.shape != shape:
            raise ValueError(f"panoptic planes do not match {self.height}x{self.width}")
        return self

    @classmethod
    def from_planes(cls, class_ids, instance_ids) -> "PanopticMap":
        """Build a map and recompute its segment index from the planes."""
        class_ids = _label_plane(class_ids)
        instance_ids = _label_plane(instance_ids)
        return cls(
            width=class_ids.shape[1],
            height=class_ids.shape[0],
            class_ids=class_ids,
            instance_ids=instance_ids,
            segments=index_segments(class_ids, instance_ids),
        )

    @classmethod
    def from_packed(cls, packed) -> "PanopticMap":
        packed = np.asarray(packed, dtype=np.int64)
        return cls.from_planes(packed // PANOPTIC_OFFSET, packed % PANOPTIC_OFFSET)

    def packed(self) -> np.ndarray:
        """class_id * 65536 + instance_id as int64."""
        return self.class_ids.astype(np.int64) * PANOPTIC_OFFSET + self.instance_ids


def index_segments(class_ids: np.ndarray, instance_ids: np.ndarray) -> List[SegmentEntry]:
    """Recompute the thing-segment index (instance id order) from the planes."""
    flat_inst = instance_ids.ravel()
    present = flat_inst > 0
    if not present.any():
        return []
    inst = flat_inst[present]
    areas = np.bincount(inst)
    # an instance id carries a single class
    class_of = np.zeros(areas.shape[0], dtype=np.int64)
    class_of[inst] = class_ids.ravel()[present]
    return [
        SegmentEntry(instance_id=int(i), class_id=int(class_of[i]), area=int(areas[i]))
        for i in np.flatnonzero(areas)
    ]


class FusionConfig(BaseModel):
    """Parameters of the instance/semantic merge heuristic."""

    model_config = ConfigDict(frozen=True)

    confidence_threshold: float = Field(0.5, ge=0.0, le=1.0)
    overlap_keep_fraction: float = Field(0.5, ge=0.0, le=1.0)
    min_stuff_area: int = Field(REFERENCE_MIN_STUFF_AREA, ge=0)
    min_instance_area: int = Field(16, ge=0)

    @classmethod
    def for_frame(cls, width: int, height: int, **overrides) -> "FusionConfig":
        """Defaults with the stuff-area limit scaled from 480x640 to this frame size."""
        if overrides.get("min_stuff_area") is None:
            overrides["min_stuff_area"] = int(
                round(REFERENCE_MIN_STUFF_AREA * width * height / REFERENCE_AREA)
            )
        return cls(**overrides)
