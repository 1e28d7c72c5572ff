from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from panoptic_nav.models.base import ArrayModel


class BitMask(ArrayModel):
    """Binary mask stored as a (height, width) boolean grid in row-major order."""

    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    bits: np.ndarray

    @field_validator("bits", mode="before")
    @classmethod
    def coerce_bits(cls, value) -> np.ndarray:
        return np.asarray(value, dtype=bool)

    @model_validator(mode="after")
    def check_shape(self) -> "BitMask":
        if self.bits.shape != (self.height, self.width):
            raise ValueError(
                f"bits shape {self.bits.shape} does not match {self.height}x{self.width}"
            )
        return self

    @classmethod
    def from_array(cls, bits) -> "BitMask":
        bits = np.asarray(bits, dtype=bool)
        return cls(width=bits.shape[1], height=bits.shape[0], bits=bits)

    @property
    def area(self) -> int:
        return int(np.count_nonzero(self.bits))


class RleMask(BaseModel):
    """Row-major run-length mask: alternating zero/one runs starting with a zero-run."""

    model_config = ConfigDict(frozen=True)

    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    runs: Tuple[int, ...]


class Box(BaseModel):
    """Axis-aligned box with inclusive pixel coordinates."""

    model_config = ConfigDict(frozen=True)

    x_min: int = Field(..., ge=0)
    y_min: int = Field(..., ge=0)
    x_max: int = Field(..., ge=0)
    y_max: int = Field(..., ge=0)

    @model_validator(mode="after")
    def check_ordered(self) -> "Box":
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"box corners out of order: {self.as_tuple()}")
        return self

    def as_tuple(self) -> Tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    @property
    def area(self) -> int:
        return (self.x_max - self.x_min + 1) * (self.y_max - self.y_min + 1)
