from functools import lru_cache
from typing import List, Literal, Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

DEFAULT_AP_THRESHOLDS = [round(0.5 + 0.05 * i, 2) for i in range(10)]


class Settings(BaseSettings):
    """Toolkit settings loaded from environment variables (prefix PANONAV_)."""

    # Application Configuration
    app_env: str = "development"
    log_level: str = "INFO"
    system_log_path: Optional[str] = None
    schema_path: Optional[str] = None

    # Fusion Configuration
    fusion_confidence_threshold: float = Field(0.5, ge=0.0, le=1.0)
    fusion_overlap_keep_fraction: float = Field(0.5, ge=0.0, le=1.0)
    fusion_min_stuff_area: Optional[int] = Field(None, ge=0)
    fusion_min_instance_area: int = Field(16, ge=0)

    # Feedback Configuration
    feedback_d_floor_m: float = Field(0.3, gt=0.0)
    feedback_max_events_per_frame: int = Field(3, ge=0)
    feedback_repeat_suppression_us: int = Field(2_000_000, ge=0)
    feedback_reapproach_fraction: float = Field(0.2, gt=0.0, lt=1.0)
    feedback_d_ceiling_m: float = Field(10.0, gt=0.0)

    # Pipeline Configuration
    pipeline_mode: Literal["lossless", "latest-wins"] = "lossless"
    pipeline_target_rate_fps: float = Field(4.0, gt=0.0)
    analytics_window: int = Field(4, ge=1)

    # Evaluation Configuration
    eval_ap_thresholds: List[float] = Field(default_factory=lambda: list(DEFAULT_AP_THRESHOLDS))
    eval_resample: Literal["nearest", "bilinear"] = "nearest"

    # Server Configuration
    server_host: str = "0.0.0.0"
    server_port: int = Field(7878, ge=0, le=65535)
    server_http_port: Optional[int] = Field(None, ge=0, le=65535)
    heartbeat_interval_s: float = Field(1.0, gt=0.0)
    max_payload_bytes: int = Field(64 * 1024 * 1024, gt=0)

    model_config = SettingsConfigDict(
        env_prefix="PANONAV_",
        env_file=".env",
        case_sensitive=False,
        extra="ignore",
    )


_active_settings: Optional[Settings] = None


@lru_cache()
def _env_settings() -> Settings:
    return Settings()


def get_settings() -> Settings:
    """Get the active settings instance (cached environment settings by default)."""
    if _active_settings is not None:
        return _active_settings
    return _env_settings()


def use_settings(settings: Optional[Settings]) -> None:
    """Install settings built from a config file and flags; None restores the environment."""
    global _active_settings
    _active_settings = settings
