from typing import Optional


class BasePanopticException(Exception):
    """Base exception for toolkit errors."""

    status_code: int = 422
    exit_code: int = 2

    def __init__(self, detail: str = "An error occurred", status_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if status_code is not None:
            self.status_code = status_code


class UsageException(BasePanopticException):
    """Exception raised for invalid command-line usage or out-of-range settings."""

    status_code = 400
    exit_code = 1


class SchemaValidationException(BasePanopticException):
    """Exception raised when a schema document is invalid."""


class MapValidationException(BasePanopticException):
    """Exception raised when a label map holds ids unknown to the schema."""

    def __init__(self, row: int, col: int, class_id: int):
        super().__init__(f"Unknown class id {class_id} at row {row}, col {col}")
        self.row = row
        self.col = col
        self.class_id = class_id


class DimensionMismatchException(BasePanopticException):
    """Exception raised when planes or masks disagree in size."""

    def __init__(self, what: str, expected, actual):
        super().__init__(f"Dimension mismatch for {what}: expected {expected}, got {actual}")


class MalformedMaskException(BasePanopticException):
    """Exception raised when a run-length mask violates its invariants."""


class FusionInputException(BasePanopticException):
    """Exception raised when fusion receives an invalid instance prediction."""


class MetricInputException(BasePanopticException):
    """Exception raised for invalid metric arguments."""


class SequenceOrderException(BasePanopticException):
    """Exception raised when frame counts are not in ascending frame order."""


class SchedulerTimeRegressionException(BasePanopticException):
    """Exception raised when feedback candidates go back in time."""

    def __init__(self, previous_us: int, current_us: int):
        super().__init__(
            f"Timestamp regression: {current_us} us after {previous_us} us"
        )


class MissingPlaneException(BasePanopticException):
    """Exception raised when a frame lacks a plane a stage requires."""

    def __init__(self, frame_id: int, plane: str):
        super().__init__(f"Frame {frame_id} has no {plane} plane")
        self.frame_id = frame_id
        self.plane = plane


class FrameEncodeException(BasePanopticException):
    """Exception raised when a frame cannot be encoded."""


class FrameDecodeException(BasePanopticException):
    """Base exception for frame decoding failures."""


class TruncatedBufferException(FrameDecodeException):
    """Exception raised when a frame buffer ends early."""

    def __init__(self, section: str, needed: int, available: int):
        super().__init__(
            f"Truncated buffer in {section}: need {needed} bytes, {available} available"
        )
        self.section = section


class UnknownPlaneBitsException(FrameDecodeException):
    """Exception raised when the plane-presence bitmask has unknown bits."""

    def __init__(self, bitmask: int):
        super().__init__(f"Unknown plane bits in bitmask 0x{bitmask:02x}")


class PlaneLengthMismatchException(FrameDecodeException):
    """Exception raised when a declared plane length disagrees with the frame size."""

    def __init__(self, plane: str, declared: int, expected: int):
        super().__init__(
            f"Plane {plane} declares {declared} bytes, expected {expected}"
        )
        self.plane = plane


class RunSumMismatchException(FrameDecodeException):
    """Exception raised when an instance mask's runs do not cover the frame."""

    def __init__(self, index: int, total: int, expected: int):
        super().__init__(
            f"Instance {index} mask runs sum to {total}, expected {expected}"
        )


class WireProtocolException(BasePanopticException):
    """Base exception for wire message errors."""

    def __init__(self, detail: str, remainder: bytes = b""):
        super().__init__(detail)
        self.remainder = remainder


class BadMagicException(WireProtocolException):
    """Exception raised when a message does not start with the magic bytes."""


class UnsupportedVersionException(WireProtocolException):
    """Exception raised for an unknown protocol version."""


class CrcMismatchException(WireProtocolException):
    """Exception raised when a message checksum does not verify."""


class OversizePayloadException(WireProtocolException):
    """Exception raised when a declared payload exceeds the size cap."""


class SequenceStoreException(BasePanopticException):
    """Base exception for on-disk sequence errors."""


class MissingBlobException(SequenceStoreException):
    """Exception raised when a manifest references a missing blob."""

    def __init__(self, filename: str):
        super().__init__(f"Frame blob {filename} referenced by manifest does not exist")
        self.filename = filename


class DuplicateFrameIdException(SequenceStoreException):
    """Exception raised when two frames share an id."""

    def __init__(self, frame_id: int):
        super().__init__(f"Duplicate frame_id {frame_id}")
        self.frame_id = frame_id
