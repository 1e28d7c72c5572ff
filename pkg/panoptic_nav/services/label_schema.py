import json
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import numpy as np
from pydantic import ValidationError

from panoptic_nav.config import get_settings
from panoptic_nav.models.schema import ClassDef, LabelSchema, MapValidation
from panoptic_nav.models.panoptic import PanopticMap, SemanticMap
from panoptic_nav.utils.exceptions import SchemaValidationException
from panoptic_nav.utils.logger import get_logger

logger = get_logger(__name__)

DEFAULT_SCHEMA_PATH = Path(__file__).resolve().parent.parent / "data" / "default_schema.json"

SchemaSource = Union[str, bytes, Path, Mapping[str, Any]]


def load_schema(source: SchemaSource) -> LabelSchema:
    """
    Load and validate a schema document.

    Args:
        source: Path to a JSON file, JSON text/bytes, or an already parsed mapping

    Returns:
        Validated LabelSchema with class order preserved

    Raises:
        SchemaValidationException: naming the offending class and its position
    """
    document = _read_document(source)

    raw_classes = document.get("classes")
    if not isinstance(raw_classes, list):
        raise SchemaValidationException("Schema document needs a 'classes' array")

    classes: List[ClassDef] = []
    seen: Dict[int, str] = {}
    for position, entry in enumerate(raw_classes):
        if not isinstance(entry, Mapping):
            raise SchemaValidationException(f"Class at position {position} is not an object")
        label = entry.get("name", "?")
        try:
            class_def = ClassDef(
                id=entry.get("id"),
                name=entry.get("name"),
                is_thing=entry.get("is_thing"),
                weight=entry.get("weight", 0.0),
                color=tuple(entry.get("color", (0, 0, 0))),
            )
        except (ValidationError, TypeError) as e:
            raise SchemaValidationException(
                f"Invalid class '{label}' at position {position}: {_first_error(e)}"
            )
        if class_def.id in seen:
            raise SchemaValidationException(
                f"Duplicate class id {class_def.id} for '{class_def.name}' at position {position} "
                f"(already used by '{seen[class_def.id]}')"
            )
        seen[class_def.id] = class_def.name
        classes.append(class_def)

    void_id = document.get("void_id", 0)
    if not isinstance(void_id, int) or void_id not in seen:
        raise SchemaValidationException(f"Missing void class: void_id {void_id!r} is not among the classes")

    try:
        schema = LabelSchema(classes=classes, void_id=void_id)
    except ValidationError as e:
        raise SchemaValidationException(f"Invalid schema: {_first_error(e)}")

    if not schema.thing_ids or not schema.stuff_ids:
        logger.warning("Schema has no thing or no stuff classes besides void")
    return schema


@lru_cache()
def default_schema() -> LabelSchema:
    """The bundled street-scene schema (28 stuff + 37 thing classes plus void)."""
    return load_schema(DEFAULT_SCHEMA_PATH)


def schema_to_document(schema: LabelSchema) -> Dict[str, Any]:
    return {
        "void_id": schema.void_id,
        "classes": [
            {
                "id": c.id,
                "name": c.name,
                "is_thing": c.is_thing,
                "weight": c.weight,
                "color": list(c.color),
            }
            for c in schema.classes
        ],
    }


def validate_map(label_map: Union[SemanticMap, PanopticMap, np.ndarray], schema: LabelSchema) -> MapValidation:
    """Accept iff every pixel's class id is in the schema; otherwise report the first offender."""
    if isinstance(label_map, SemanticMap):
        ids = label_map.ids
    elif isinstance(label_map, PanopticMap):
        ids = label_map.class_ids
    else:
        ids = np.asarray(label_map)

    known = np.isin(ids, np.asarray(schema.ids))
    if known.all():
        return MapValidation(ok=True)
    flat = int(np.argmin(known.ravel()))
    row, col = divmod(flat, ids.shape[1])
    return MapValidation(ok=False, row=row, col=col, class_id=int(ids[row, col]))


def _read_document(source: SchemaSource) -> Mapping[str, Any]:
    if isinstance(source, Mapping):
        return source
    try:
        if isinstance(source, Path) or (isinstance(source, str) and not source.lstrip().startswith("{")):
            text = Path(source).read_text(encoding="utf-8")
        elif isinstance(source, bytes):
            text = source.decode("utf-8")
        else:
            text = source
        document = json.loads(text)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise SchemaValidationException(f"Malformed schema document: {str(e)}")
    if not isinstance(document, Mapping):
        raise SchemaValidationException("Malformed schema document: top level must be an object")
    return document


def _first_error(error: Exception) -> str:
    if isinstance(error, ValidationError):
        first = error.errors()[0]
        location = ".".join(str(part) for part in first.get("loc", ()))
        return f"{location}: {first.get('msg')}" if location else str(first.get("msg"))
    return str(error)


def active_schema(schema_path: Optional[str] = None) -> LabelSchema:
    """Schema from an explicit path, else the configured one, else the bundled default."""
    path = schema_path or get_settings().schema_path
    return load_schema(Path(path)) if path else default_schema()
