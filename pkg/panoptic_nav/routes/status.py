from fastapi import APIRouter, Request

from panoptic_nav.services.label_schema import schema_to_document
from panoptic_nav.utils.responses import success_response

router = APIRouter(tags=["status"])


@router.get("/schema")
async def get_schema(request: Request):
    """Active label schema."""
    return success_response("Active schema", schema_to_document(request.app.state.schema))


@router.get("/timing")
async def get_timing(request: Request):
    """Timing report of the most recently closed live session (null before the first one)."""
    server = request.app.state.live_server
    report = server.latest_timing if server is not None else None
    return success_response(
        "Latest live timing report",
        report.model_dump(mode="json") if report is not None else None
    )
