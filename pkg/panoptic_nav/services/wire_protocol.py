"""
Framed byte-stream protocol.

Format (little-endian):
- MAGIC "PANO" (50 41 4E 4F)
- version u8 (1)
- msg_type u8 (1 FRAME, 2 FEEDBACK, 3 HEARTBEAT, 4 SCHEMA)
- payload_len u32
- payload
- crc32 u32 over everything before it (zlib polynomial)

A damaged message raises a WireProtocolException whose remainder starts at the
next candidate magic, so the caller can keep parsing.
"""

import json
import struct
import zlib
from typing import List, Optional, Sequence, Tuple

from panoptic_nav.models.feedback import FeedbackEvent
from panoptic_nav.models.frame import MessageType, WireMessage
from panoptic_nav.models.schema import LabelSchema
from panoptic_nav.services.label_schema import schema_to_document
from panoptic_nav.utils.exceptions import (
    BadMagicException, CrcMismatchException, OversizePayloadException,
    UnsupportedVersionException, WireProtocolException
)
from panoptic_nav.utils.logger import log_event

MAGIC = b"PANO"
VERSION = 1
HEADER = struct.Struct("<4sBBI")
CRC = struct.Struct("<I")
MAX_PAYLOAD_BYTES = 64 * 1024 * 1024


def calculate_crc(data: bytes) -> int:
    return zlib.crc32(data) & 0xFFFFFFFF


def serialize_message(message: WireMessage) -> bytes:
    head = HEADER.pack(MAGIC, message.version, int(message.msg_type), len(message.payload))
    body = head + message.payload
    return body + CRC.pack(calculate_crc(body))


def frame_message(payload: bytes, msg_type: MessageType = MessageType.FRAME) -> bytes:
    """Wrap a payload (by default an encoded frame) in one wire message."""
    return serialize_message(WireMessage(msg_type=msg_type, payload=payload))


def heartbeat_message() -> bytes:
    return frame_message(b"", MessageType.HEARTBEAT)


def parse_message(buffer: bytes,
                  max_payload: int = MAX_PAYLOAD_BYTES) -> Tuple[Optional[WireMessage], bytes]:
    """
    Parse one message from the front of a buffer.

    Returns:
        (message, remainder); message is None while the buffer holds only part
        of a message, in which case the remainder is the untouched buffer

    Raises:
        WireProtocolException: bad magic, unsupported version or type, oversize
            payload or CRC mismatch; `remainder` is resynchronized to the next magic
    """
    if len(buffer) < len(MAGIC):
        if MAGIC.startswith(buffer):
            return None, buffer
        raise BadMagicException("Bad magic bytes", _resync(buffer, 1))
    if not buffer.startswith(MAGIC):
        raise BadMagicException(f"Bad magic {buffer[:4].hex()}", _resync(buffer, 1))
    if len(buffer) < HEADER.size:
        return None, buffer

    _, version, msg_type, payload_len = HEADER.unpack_from(buffer)
    if version != VERSION:
        raise UnsupportedVersionException(f"Unsupported protocol version {version}", _resync(buffer, 1))
    if msg_type not in MessageType._value2member_map_:
        raise WireProtocolException(f"Unknown message type {msg_type}", _resync(buffer, 1))
    # checked before anything is allocated for the payload
    if payload_len > max_payload:
        raise OversizePayloadException(
            f"Payload of {payload_len} bytes exceeds the {max_payload} byte cap", _resync(buffer, 1)
        )

    total = HEADER.size + payload_len + CRC.size
    if len(buffer) < total:
        return None, buffer

    body = buffer[:HEADER.size + payload_len]
    (received,) = CRC.unpack_from(buffer, HEADER.size + payload_len)
    if calculate_crc(body) != received:
        raise CrcMismatchException("CRC mismatch", _resync(buffer, 1))

    message = WireMessage(msg_type=MessageType(msg_type), payload=bytes(body[HEADER.size:]), version=version)
    return message, buffer[total:]


def _resync(buffer: bytes, start: int) -> bytes:
    """Drop bytes up to the next magic; keep a trailing partial magic for the next read."""
    index = buffer.find(MAGIC, start)
    if index != -1:
        return buffer[index:]
    for keep in range(len(MAGIC) - 1, 0, -1):
        if len(buffer) - keep >= start and buffer.endswith(MAGIC[:keep]):
            return buffer[-keep:]
    return b""


class MessageReader:
    """Stateful parser for a byte stream: feed chunks, collect complete messages."""

    def __init__(self, max_payload: int = MAX_PAYLOAD_BYTES, source: str = "transport"):
        self.buffer = b""
        self.max_payload = max_payload
        self.source = source
        self.errors: List[WireProtocolException] = []

    def feed(self, data: bytes) -> List[WireMessage]:
        """Add received bytes; return every message completed by them."""
        self.buffer += data
        messages: List[WireMessage] = []
        while self.buffer:
            try:
                message, self.buffer = parse_message(self.buffer, self.max_payload)
            except WireProtocolException as e:
                self.errors.append(e)
                log_event(self.source, "warning", f"Dropped bytes on stream: {e.detail}",
                          {"error": type(e).__name__})
                self.buffer = e.remainder
                continue
            if message is None:
                break
            messages.append(message)
        return messages


def feedback_payload(frame_id: int, events: Sequence[FeedbackEvent]) -> bytes:
    """FEEDBACK payload: UTF-8 JSON object with the frame id and its emitted events."""
    document = {"frame_id": frame_id, "events": [e.model_dump(mode="json") for e in events]}
    return json.dumps(document, separators=(",", ":")).encode("utf-8")


def schema_payload(schema: LabelSchema) -> bytes:
    """SCHEMA payload: the schema document as compact UTF-8 JSON."""
    return json.dumps(schema_to_document(schema), separators=(",", ":")).encode("utf-8")


def parse_feedback_payload(payload: bytes) -> Tuple[int, List[FeedbackEvent]]:
    document = json.loads(payload.decode("utf-8"))
    return int(document["frame_id"]), [FeedbackEvent.model_validate(e) for e in document["events"]]
