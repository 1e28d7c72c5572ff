"""
Canonical little-endian frame codec.

Layout:
    header      u64 frame_id | u64 timestamp_us | u16 width | u16 height | u8 plane bitmask
    planes      in fixed order rgb, semantic, depth, panoptic, instances;
                each as u32 byte length followed by the plane bytes
    rgb         height*width*3 u8
    semantic    height*width u16 class ids
    depth       height*width u16 millimeters
    panoptic    height*width u32 packed class_id*65536 + instance_id
    instances   u16 count, then per instance:
                u16 class | u32 confidence micro-units | u8 box present | 4*u16 box |
                u32 run count | u32 runs[]

Decoding never trusts a declared length before checking it against the bytes
actually available.
"""

import struct
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from panoptic_nav.models.depth import DepthMap
from panoptic_nav.models.frame import Frame, dimensions_supported
from panoptic_nav.models.masks import Box, RleMask
from panoptic_nav.models.panoptic import InstancePrediction, PanopticMap, SemanticMap
from panoptic_nav.services.mask_codec import rle_decode, rle_encode
from panoptic_nav.utils.exceptions import (
    FrameDecodeException, FrameEncodeException, MalformedMaskException, PlaneLengthMismatchException,
    RunSumMismatchException, TruncatedBufferException, UnknownPlaneBitsException
)

HEADER = struct.Struct("<QQHHB")
LENGTH = struct.Struct("<I")
INSTANCE_HEAD = struct.Struct("<HIB4HI")
COUNT = struct.Struct("<H")

PLANE_BITS = {"rgb": 0x01, "semantic": 0x02, "depth": 0x04, "panoptic": 0x08, "instances": 0x10}
PLANE_ORDER = ("rgb", "semantic", "depth", "panoptic", "instances")
ALL_BITS = 0x1F
MICRO = 1_000_000


def encode_frame(frame: Frame) -> bytes:
    """Serialize a frame; raises FrameEncodeException when a value does not fit the layout."""
    if not dimensions_supported(frame.width, frame.height):
        raise FrameEncodeException(f"Frame {frame.frame_id} is {frame.width}x{frame.height}, above 1920x1080")

    bitmask = 0
    for name in PLANE_ORDER:
        if getattr(frame, name) is not None:
            bitmask |= PLANE_BITS[name]

    parts = [HEADER.pack(frame.frame_id, frame.timestamp_us, frame.width, frame.height, bitmask)]
    if frame.rgb is not None:
        parts.append(_plane(frame.rgb.astype(np.uint8).tobytes()))
    if frame.semantic is not None:
        parts.append(_plane(_u16(frame.semantic.ids, "semantic class id").tobytes()))
    if frame.depth is not None:
        parts.append(_plane(frame.depth.depths.astype("<u2").tobytes()))
    if frame.panoptic is not None:
        _u16(frame.panoptic.class_ids, "panoptic class id")
        _u16(frame.panoptic.instance_ids, "instance id")
        parts.append(_plane(frame.panoptic.packed().astype("<u4").tobytes()))
    if frame.instances is not None:
        parts.append(_plane(_encode_instances(frame.instances)))
    return b"".join(parts)


def decode_frame(data: bytes) -> Frame:
    """
    Inverse of encode_frame.

    Raises:
        FrameDecodeException: or one of its subclasses for truncated buffers, unknown
            plane bits, plane length mismatches and run-sum mismatches
    """
    reader = _Reader(bytes(data))
    frame_id, timestamp_us, width, height, bitmask = HEADER.unpack(reader.take(HEADER.size, "header"))
    if bitmask & ~ALL_BITS:
        raise UnknownPlaneBitsException(bitmask)
    if width == 0 or height == 0 or not dimensions_supported(width, height):
        raise FrameDecodeException(f"Unsupported frame dimensions {width}x{height}")

    pixels = width * height
    planes = {}
    for name in PLANE_ORDER:
        if not bitmask & PLANE_BITS[name]:
            continue
        (declared,) = LENGTH.unpack(reader.take(LENGTH.size, f"{name} length"))
        if name != "instances":
            expected = pixels * {"rgb": 3, "semantic": 2, "depth": 2, "panoptic": 4}[name]
            if declared != expected:
                raise PlaneLengthMismatchException(name, declared, expected)
        body = reader.take(declared, name)
        planes[name] = _decode_plane(name, body, width, height, frame_id)

    if reader.remaining:
        raise FrameDecodeException(f"{reader.remaining} trailing bytes after the last plane")

    try:
        return Frame(frame_id=frame_id, timestamp_us=timestamp_us, width=width, height=height, **planes)
    except ValidationError as e:
        raise FrameDecodeException(f"Decoded frame is invalid: {e.errors()[0].get('msg')}")


def _decode_plane(name: str, body: bytes, width: int, height: int, frame_id: int):
    shape = (height, width)
    try:
        if name == "rgb":
            return np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3).copy()
        if name == "semantic":
            return SemanticMap(width=width, height=height, ids=np.frombuffer(body, dtype="<u2").reshape(shape))
        if name == "depth":
            return DepthMap(width=width, height=height,
                            depths=np.frombuffer(body, dtype="<u2").reshape(shape).astype(np.uint16))
        if name == "panoptic":
            return PanopticMap.from_packed(np.frombuffer(body, dtype="<u4").reshape(shape))
        return _decode_instances(body, width, height)
    except ValidationError as e:
        raise FrameDecodeException(f"Frame {frame_id} {name} plane is invalid: {e.errors()[0].get('msg')}")


def _encode_instances(instances: List[InstancePrediction]) -> bytes:
    if len(instances) > 0xFFFF:
        raise FrameEncodeException(f"{len(instances)} instances exceed the u16 count")
    parts = [COUNT.pack(len(instances))]
    for instance in instances:
        if instance.class_id > 0xFFFF:
            raise FrameEncodeException(f"Instance class id {instance.class_id} does not fit u16")
        box = instance.box.as_tuple() if instance.box is not None else (0, 0, 0, 0)
        if any(v > 0xFFFF for v in box):
            raise FrameEncodeException(f"Box {box} does not fit u16 coordinates")
        runs = rle_encode(instance.mask).runs
        parts.append(INSTANCE_HEAD.pack(
            instance.class_id,
            confidence_to_micro(instance.confidence),
            1 if instance.box is not None else 0,
            *box,
            len(runs),
        ))
        parts.append(struct.pack(f"<{len(runs)}I", *runs))
    return b"".join(parts)


def _decode_instances(body: bytes, width: int, height: int) -> List[InstancePrediction]:
    reader = _Reader(body)
    (count,) = COUNT.unpack(reader.take(COUNT.size, "instances count"))
    instances: List[InstancePrediction] = []
    pixels = width * height
    for index in range(count):
        class_id, micro, has_box, x0, y0, x1, y1, n_runs = INSTANCE_HEAD.unpack(
            reader.take(INSTANCE_HEAD.size, f"instance {index}")
        )
        if micro > MICRO:
            raise FrameDecodeException(f"Instance {index} confidence {micro} exceeds {MICRO} micro-units")
        if has_box > 1:
            raise FrameDecodeException(f"Instance {index} box flag {has_box} is not 0 or 1")
        if not has_box and (x0, y0, x1, y1) != (0, 0, 0, 0):
            raise FrameDecodeException(f"Instance {index} has box coordinates but no box flag")
        if n_runs > pixels + 1:
            raise FrameDecodeException(f"Instance {index} declares {n_runs} runs for {pixels} pixels")
        raw = reader.take(4 * n_runs, f"instance {index} runs")
        runs = struct.unpack(f"<{n_runs}I", raw)
        total = sum(runs)
        if total != pixels:
            raise RunSumMismatchException(index, total, pixels)
        try:
            mask = rle_decode(RleMask(width=width, height=height, runs=runs))
        except MalformedMaskException as e:
            raise FrameDecodeException(f"Instance {index} mask: {e.detail}")
        box: Optional[Box] = None
        if has_box:
            if x1 >= width or y1 >= height:
                raise FrameDecodeException(f"Instance {index} box lies outside the frame")
            box = Box(x_min=x0, y_min=y0, x_max=x1, y_max=y1)
        instances.append(InstancePrediction(
            class_id=class_id, confidence=micro / MICRO, mask=mask, box=box
        ))
    if reader.remaining:
        raise PlaneLengthMismatchException("instances", len(body), len(body) - reader.remaining)
    return instances


def confidence_to_micro(confidence: float) -> int:
    return int(round(confidence * MICRO))


def _plane(body: bytes) -> bytes:
    return LENGTH.pack(len(body)) + body


def _u16(plane: np.ndarray, what: str) -> np.ndarray:
    if plane.size and (plane.min() < 0 or plane.max() > 0xFFFF):
        raise FrameEncodeException(f"{what} out of u16 range")
    return plane.astype("<u2")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    @property
    def remaining(self) -> int:
        return len(self.data) - self.offset

    def take(self, size: int, section: str) -> bytes:
        if size > self.remaining:
            raise TruncatedBufferException(section, size, self.remaining)
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk
