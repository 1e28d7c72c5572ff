import json

import numpy as np
import pytest

from conftest import CAR, ROAD, make_instance, rect
from panoptic_nav.models.frame import Frame
from panoptic_nav.models.panoptic import SemanticMap
from panoptic_nav.storage.sequence_store import (
    MANIFEST_NAME, blob_name, iter_sequence, read_manifest, read_sequence, write_sequence
)
from panoptic_nav.utils.exceptions import (
    DuplicateFrameIdException, FrameDecodeException, MissingBlobException, SequenceStoreException
)


def frame(frame_id):
    ids = np.full((3, 4), ROAD, dtype=np.int32)
    return Frame(frame_id=frame_id, timestamp_us=frame_id * 250000, width=4, height=3,
                 semantic=SemanticMap.from_array(ids),
                 instances=[make_instance(CAR, 0.9, rect(3, 4, 0, 0, 1, 1))])


def test_empty_sequence(tmp_path):
    manifest = write_sequence([], tmp_path)
    assert manifest.frames == []
    assert read_sequence(tmp_path) == []


def test_frames_come_back_in_id_order(tmp_path):
    frames = [frame(2), frame(0), frame(1)]
    manifest = write_sequence(frames, tmp_path)
    assert [e.frame_id for e in manifest.frames] == [0, 1, 2]
    assert manifest.frames[0].planes == ["semantic", "instances"]
    assert read_sequence(tmp_path) == sorted(frames, key=lambda f: f.frame_id)
    assert (tmp_path / blob_name(1)).is_file()


def test_manifest_is_readable_json(tmp_path):
    write_sequence([frame(4)], tmp_path)
    document = json.loads((tmp_path / MANIFEST_NAME).read_text(encoding="utf-8"))
    assert document["frames"][0]["blob"] == "00000004.pframe"
    assert read_manifest(tmp_path).frames[0].timestamp_us == 1_000_000


def test_missing_blob_is_named_before_any_frame_is_read(tmp_path):
    write_sequence([frame(0), frame(1)], tmp_path)
    (tmp_path / blob_name(1)).unlink()
    frames = iter_sequence(tmp_path)
    with pytest.raises(MissingBlobException) as info:
        next(frames)
    assert info.value.filename == blob_name(1)
    assert blob_name(1) in info.value.detail


def test_duplicate_ids(tmp_path):
    with pytest.raises(DuplicateFrameIdException):
        write_sequence([frame(3), frame(3)], tmp_path)
    write_sequence([frame(3)], tmp_path)
    document = json.loads((tmp_path / MANIFEST_NAME).read_text(encoding="utf-8"))
    document["frames"].append(document["frames"][0])
    (tmp_path / MANIFEST_NAME).write_text(json.dumps(document), encoding="utf-8")
    with pytest.raises(DuplicateFrameIdException):
        read_manifest(tmp_path)


def test_missing_or_malformed_manifest(tmp_path):
    with pytest.raises(SequenceStoreException):
        read_manifest(tmp_path)
    (tmp_path / MANIFEST_NAME).write_text("{broken", encoding="utf-8")
    with pytest.raises(SequenceStoreException, match="Malformed"):
        read_manifest(tmp_path)


def test_blob_must_hold_the_listed_frame(tmp_path):
    write_sequence([frame(0), frame(1)], tmp_path)
    (tmp_path / blob_name(1)).write_bytes((tmp_path / blob_name(0)).read_bytes())
    with pytest.raises(FrameDecodeException):
        read_sequence(tmp_path)
