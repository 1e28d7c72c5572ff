"""
Sequence-on-disk: a directory with manifest.json and one .pframe blob per frame.
"""

import json
from pathlib import Path
from typing import Iterator, List, Sequence, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from panoptic_nav.models.frame import Frame
from panoptic_nav.services.frame_codec import decode_frame, encode_frame
from panoptic_nav.utils.exceptions import (
    DuplicateFrameIdException, FrameDecodeException, MissingBlobException, SequenceStoreException
)
from panoptic_nav.utils.logger import get_logger

logger = get_logger(__name__)

MANIFEST_NAME = "manifest.json"
BLOB_SUFFIX = ".pframe"

PathLike = Union[str, Path]


class ManifestEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    frame_id: int = Field(..., ge=0)
    timestamp_us: int = Field(..., ge=0)
    blob: str
    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    planes: List[str] = Field(default_factory=list)


class Manifest(BaseModel):
    model_config = ConfigDict(frozen=True)

    version: int = 1
    frames: List[ManifestEntry] = Field(default_factory=list)


def blob_name(frame_id: int) -> str:
    return f"{frame_id:08d}{BLOB_SUFFIX}"


def write_sequence(frames: Sequence[Frame], path: PathLike) -> Manifest:
    """
    Write frames (sorted by frame_id) and their manifest.

    Raises:
        DuplicateFrameIdException: two frames share an id
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    ordered = sorted(frames, key=lambda f: f.frame_id)
    for previous, current in zip(ordered, ordered[1:]):
        if previous.frame_id == current.frame_id:
            raise DuplicateFrameIdException(current.frame_id)

    entries = []
    for frame in ordered:
        name = blob_name(frame.frame_id)
        (root / name).write_bytes(encode_frame(frame))
        entries.append(ManifestEntry(
            frame_id=frame.frame_id,
            timestamp_us=frame.timestamp_us,
            blob=name,
            width=frame.width,
            height=frame.height,
            planes=frame.plane_names,
        ))
    manifest = Manifest(frames=entries)
    (root / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"Wrote {len(entries)} frames to {root}")
    return manifest


def read_manifest(path: PathLike) -> Manifest:
    manifest_path = Path(path) / MANIFEST_NAME
    if not manifest_path.is_file():
        raise SequenceStoreException(f"No {MANIFEST_NAME} in {path}")
    try:
        manifest = Manifest.model_validate(json.loads(manifest_path.read_text(encoding="utf-8")))
    except (json.JSONDecodeError, ValidationError) as e:
        raise SequenceStoreException(f"Malformed manifest {manifest_path}: {str(e)}")
    seen = set()
    for entry in manifest.frames:
        if entry.frame_id in seen:
            raise DuplicateFrameIdException(entry.frame_id)
        seen.add(entry.frame_id)
    return manifest


def iter_sequence(path: PathLike) -> Iterator[Frame]:
    """Frames in ascending frame_id, decoded lazily one blob at a time."""
    root = Path(path)
    manifest = read_manifest(root)
    entries = sorted(manifest.frames, key=lambda e: e.frame_id)
    for entry in entries:
        if not (root / entry.blob).is_file():
            raise MissingBlobException(entry.blob)
    for entry in entries:
        frame = decode_frame((root / entry.blob).read_bytes())
        if frame.frame_id != entry.frame_id:
            raise FrameDecodeException(
                f"Blob {entry.blob} holds frame {frame.frame_id}, manifest says {entry.frame_id}"
            )
        yield frame


def read_sequence(path: PathLike) -> List[Frame]:
    return list(iter_sequence(path))
