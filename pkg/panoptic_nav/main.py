import time
from typing import Optional

from fastapi import FastAPI, Request, status
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse

from panoptic_nav.config import get_settings
from panoptic_nav.models.pipeline import PipelineConfig
from panoptic_nav.models.schema import LabelSchema
from panoptic_nav.routes import frames, status as status_routes
from panoptic_nav.services.label_schema import active_schema
from panoptic_nav.services.live_server import LiveServer
from panoptic_nav.services.pipeline import FrameProcessor, config_from_settings
from panoptic_nav.utils.exceptions import BasePanopticException
from panoptic_nav.utils.logger import get_logger, log_event
from panoptic_nav.utils.responses import error_response, exception_response

VERSION = "1.0.0"

logger = get_logger(__name__)


def create_app(schema: Optional[LabelSchema] = None,
               config: Optional[PipelineConfig] = None,
               live_server: Optional[LiveServer] = None) -> FastAPI:
    """
    Build the HTTP status app.

    Args:
        schema: Label schema (defaults to the configured or bundled one)
        config: Pipeline settings used by the describe route
        live_server: Running live server whose timing is exposed, if any
    """
    settings = get_settings()
    schema = schema or active_schema()
    config = config or config_from_settings(settings)

    app = FastAPI(
        title="Panoptic Navigation API",
        description="Status and frame description for the panoptic perception pipeline",
        version=VERSION,
        docs_url="/docs",
        redoc_url="/redoc"
    )
    app.state.schema = schema
    app.state.processor = FrameProcessor(config, schema)
    app.state.live_server = live_server

    # ==============================================================
    # Middleware
    # ==============================================================
    @app.middleware("http")
    async def add_process_time_header(request: Request, call_next):
        """Add processing time to response headers."""
        start_time = time.time()
        response = await call_next(request)
        response.headers["X-Process-Time"] = str(time.time() - start_time)
        return response

    # ==============================================================
    # Exception Handlers
    # ==============================================================
    @app.exception_handler(BasePanopticException)
    async def panoptic_exception_handler(request: Request, exc: BasePanopticException):
        """Handle toolkit exceptions."""
        return JSONResponse(
            status_code=exc.status_code,
            content=exception_response(exc)
        )

    @app.exception_handler(RequestValidationError)
    async def validation_exception_handler(request: Request, exc: RequestValidationError):
        """Handle validation errors."""
        return JSONResponse(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            content=error_response("Validation error", exc.errors())
        )

    @app.exception_handler(Exception)
    async def general_exception_handler(request: Request, exc: Exception):
        """Handle unexpected exceptions."""
        log_event("api", "error", f"Unexpected error: {str(exc)}")
        return JSONResponse(
            status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
            content=error_response(
                "Internal server error",
                str(exc) if settings.app_env == "development" else None
            )
        )

    # ==============================================================
    # Routers
    # ==============================================================
    app.include_router(status_routes.router, prefix="/api/v1")
    app.include_router(frames.router, prefix="/api/v1")

    # ==============================================================
    # Health Check Endpoints
    # ==============================================================
    @app.get("/")
    async def root():
        """Root endpoint."""
        return {
            "success": True,
            "message": "Panoptic Navigation API",
            "version": VERSION,
            "docs": "/docs"
        }

    @app.get("/health")
    async def health_check():
        """Basic health check."""
        server = app.state.live_server
        return {
            "success": True,
            "status": "healthy",
            "environment": settings.app_env,
            "live_server": f"{server.host}:{server.port}" if server is not None else None
        }

    return app


async def serve_http(app: FastAPI, host: str, port: int) -> None:
    """Run the status app on the current event loop (next to the live server)."""
    import uvicorn

    server = uvicorn.Server(uvicorn.Config(app, host=host, port=port, log_level="warning"))
    logger.info(f"HTTP status app on {host}:{port}")
    await server.serve()


app = create_app()


if __name__ == "__main__":
    import uvicorn

    settings = get_settings()
    uvicorn.run(
        "panoptic_nav.main:app",
        host=settings.server_host,
        port=settings.server_http_port or 8000,
        reload=settings.app_env == "development"
    )
