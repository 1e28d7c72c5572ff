from typing import Any, Dict, Optional

from panoptic_nav.utils.exceptions import BasePanopticException

# attributes some exceptions carry that help a client locate the problem
LOCATOR_FIELDS = ("section", "plane", "frame_id", "row", "col", "class_id")


def success_response(message: str, data: Any = None) -> Dict[str, Any]:
    """Create a success response."""
    return {
        "success": True,
        "message": message,
        "data": data
    }


def error_response(error: str, detail: Optional[Any] = None) -> Dict[str, Any]:
    """Create an error response."""
    response = {
        "success": False,
        "error": error
    }
    if detail:
        response["detail"] = detail
    return response


def exception_response(exc: BasePanopticException) -> Dict[str, Any]:
    """Error response for a toolkit exception: its detail, class name and any locator fields."""
    response = error_response(exc.detail)
    response["kind"] = type(exc).__name__
    where = {name: getattr(exc, name) for name in LOCATOR_FIELDS if getattr(exc, name, None) is not None}
    if where:
        response["where"] = where
    return response
