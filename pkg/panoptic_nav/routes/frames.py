from fastapi import APIRouter, Request

from panoptic_nav.services.frame_codec import decode_frame
from panoptic_nav.utils.logger import log_event
from panoptic_nav.utils.responses import success_response

router = APIRouter(prefix="/frames", tags=["frames"])


@router.post("/describe")
async def describe_frame(request: Request):
    """
    Describe one encoded frame (request body is encode_frame output).

    Returns the fused thing segments, per-segment distance/sector info and the
    candidate feedback events in priority order. Stateless: no rate control.
    """
    frame = decode_frame(await request.body())
    work = request.app.state.processor.describe_frame(frame)
    log_event("api", "info", f"Described frame {frame.frame_id}",
              {"segments": len(work.segments), "candidates": len(work.candidates)})
    return success_response(f"Frame {frame.frame_id} described", {
        "frame_id": frame.frame_id,
        "instances": [s.model_dump(mode="json") for s in work.panoptic.segments],
        "segments": [s.model_dump(mode="json") for s in work.segments],
        "candidates": [c.model_dump(mode="json") for c in work.candidates],
    })
