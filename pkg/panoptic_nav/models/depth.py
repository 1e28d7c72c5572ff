from enum import Enum
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from panoptic_nav.models.base import ArrayModel


class Sector(str, Enum):
    """Coarse horizontal direction of a segment."""
    LEFT = "left"
    CENTER = "center"
    RIGHT = "right"

    @property
    def rank(self) -> int:
        return _SECTOR_RANK[self]


_SECTOR_RANK = {Sector.LEFT: 0, Sector.CENTER: 1, Sector.RIGHT: 2}


class DepthMap(ArrayModel):
    """Depth plane in millimeters; 0 marks an invalid sample."""

    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    depths: np.ndarray

    @field_validator("depths", mode="before")
    @classmethod
    def coerce_depths(cls, value) -> np.ndarray:
        plane = np.asarray(value)
        if plane.dtype != np.uint16:
            if plane.size and (plane.min() < 0 or plane.max() >= 65536):
                raise ValueError("depth values must lie in [0, 65536) mm")
            plane = plane.astype(np.uint16)
        return plane

    @model_validator(mode="after")
    def check_shape(self) -> "DepthMap":
        if self.depths.shape != (self.height, self.width):
            raise ValueError(f"depths shape {self.depths.shape} does not match {self.height}x{self.width}")
        return self

    @classmethod
    def from_array(cls, depths) -> "DepthMap":
        depths = np.asarray(depths)
        return cls(width=depths.shape[1], height=depths.shape[0], depths=depths)


class SegmentInfo(BaseModel):
    """Per-segment area, centroid, distance and direction."""

    model_config = ConfigDict(frozen=True)

    instance_id: int = Field(..., ge=0)
    class_id: int = Field(..., ge=0)
    area: int = Field(..., ge=1)
    centroid: Tuple[float, float] = Field(..., description="(row, col) in pixels")
    distance_mm: Optional[int] = Field(None, ge=0, description="Median valid depth; None when no valid depth")
    valid_depth_fraction: float = Field(..., ge=0.0, le=1.0)
    sector: Sector

    @model_validator(mode="after")
    def check_distance(self) -> "SegmentInfo":
        if (self.distance_mm is None) != (self.valid_depth_fraction == 0.0):
            raise ValueError("distance is undefined exactly when no depth sample is valid")
        return self
