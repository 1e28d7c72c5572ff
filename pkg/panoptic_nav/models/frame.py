from enum import IntEnum
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from panoptic_nav.models.base import ArrayModel
from panoptic_nav.models.depth import DepthMap
from panoptic_nav.models.panoptic import InstancePrediction, PanopticMap, SemanticMap

U64_MAX = 2 ** 64 - 1
MAX_LONG_SIDE = 1920
MAX_SHORT_SIDE = 1080


def dimensions_supported(width: int, height: int) -> bool:
    """Up to 1080x1920 pixels in either orientation."""
    return (width <= MAX_LONG_SIDE and height <= MAX_SHORT_SIDE) or (
        width <= MAX_SHORT_SIDE and height <= MAX_LONG_SIDE
    )


class Frame(ArrayModel):
    """One captured frame with its optional planes."""

    frame_id: int = Field(..., ge=0, le=U64_MAX)
    timestamp_us: int = Field(..., ge=0, le=U64_MAX)
    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    rgb: Optional[np.ndarray] = Field(None, description="(height, width, 3) uint8")
    semantic: Optional[SemanticMap] = None
    depth: Optional[DepthMap] = None
    panoptic: Optional[PanopticMap] = None
    instances: Optional[List[InstancePrediction]] = None

    @field_validator("rgb", mode="before")
    @classmethod
    def coerce_rgb(cls, value):
        if value is None:
            return None
        return np.asarray(value, dtype=np.uint8)

    @model_validator(mode="after")
    def check_planes(self) -> "Frame":
        shape = (self.height, self.width)
        if self.rgb is not None and self.rgb.shape != shape + (3,):
            raise ValueError(f"rgb shape {self.rgb.shape} does not match {self.height}x{self.width}x3")
        for name in ("semantic", "depth", "panoptic"):
            plane = getattr(self, name)
            if plane is not None and (plane.height, plane.width) != shape:
                raise ValueError(f"{name} plane is {plane.height}x{plane.width}, frame is {self.height}x{self.width}")
        for instance in self.instances or []:
            if instance.mask.bits.shape != shape:
                raise ValueError("instance mask does not match frame dimensions")
        return self

    def with_planes(self, **planes) -> "Frame":
        """Copy of this frame with planes replaced or added."""
        values = {name: getattr(self, name) for name in type(self).model_fields}
        values.update(planes)
        return type(self)(**values)

    @property
    def plane_names(self) -> List[str]:
        names = []
        for name in ("rgb", "semantic", "depth", "panoptic", "instances"):
            if getattr(self, name) is not None:
                names.append(name)
        return names


class MessageType(IntEnum):
    FRAME = 1
    FEEDBACK = 2
    HEARTBEAT = 3
    SCHEMA = 4


class WireMessage(BaseModel):
    """One framed message on the byte stream."""

    model_config = ConfigDict(frozen=True)

    msg_type: MessageType
    payload: bytes = b""
    version: int = 1
