from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator


class ClassDef(BaseModel):
    """One entry of the class catalog."""

    model_config = ConfigDict(frozen=True)

    id: int = Field(..., ge=0, lt=65536, description="Class id")
    name: str = Field(..., min_length=1, description="Class name")
    is_thing: bool = Field(..., description="Countable object class (carries instance ids)")
    weight: float = Field(0.0, ge=0.0, description="Feedback priority weight")
    color: Tuple[int, int, int] = Field((0, 0, 0), description="RGB render color")

    @field_validator("color")
    @classmethod
    def check_color_range(cls, value: Tuple[int, int, int]) -> Tuple[int, int, int]:
        if any(c < 0 or c > 255 for c in value):
            raise ValueError(f"color components must lie in [0,255], got {list(value)}")
        return value


class LabelSchema(BaseModel):
    """Class catalog separating things from stuff, with an explicit void class."""

    model_config = ConfigDict(frozen=True)

    classes: List[ClassDef]
    void_id: int = 0

    _by_id: Dict[int, ClassDef] = PrivateAttr(default_factory=dict)

    @model_validator(mode="after")
    def check_catalog(self) -> "LabelSchema":
        by_id: Dict[int, ClassDef] = {}
        for position, class_def in enumerate(self.classes):
            if class_def.id in by_id:
                raise ValueError(
                    f"duplicate class id {class_def.id} for '{class_def.name}' at position {position}"
                )
            by_id[class_def.id] = class_def
        void = by_id.get(self.void_id)
        if void is None:
            raise ValueError(f"void class id {self.void_id} is not in the class list")
        if void.is_thing or void.weight != 0:
            raise ValueError(f"void class '{void.name}' must be stuff with weight 0")
        self._by_id = by_id
        return self

    def get(self, class_id: int) -> ClassDef:
        return self._by_id[class_id]

    def __contains__(self, class_id: int) -> bool:
        return class_id in self._by_id

    @property
    def ids(self) -> List[int]:
        return [c.id for c in self.classes]

    @property
    def thing_ids(self) -> List[int]:
        return sorted(c.id for c in self.classes if c.is_thing)

    @property
    def stuff_ids(self) -> List[int]:
        """Stuff class ids, void excluded."""
        return sorted(c.id for c in self.classes if not c.is_thing and c.id != self.void_id)

    def is_thing(self, class_id: int) -> bool:
        class_def = self._by_id.get(class_id)
        return bool(class_def and class_def.is_thing)

    def name_of(self, class_id: int) -> str:
        class_def = self._by_id.get(class_id)
        return class_def.name if class_def else str(class_id)

    def id_of(self, name: str) -> int:
        for class_def in self.classes:
            if class_def.name == name:
                return class_def.id
        raise KeyError(name)


class MapValidation(BaseModel):
    """Outcome of checking a label plane against a schema."""

    model_config = ConfigDict(frozen=True)

    ok: bool
    row: Optional[int] = None
    col: Optional[int] = None
    class_id: Optional[int] = None
