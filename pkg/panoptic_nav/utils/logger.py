import json
import logging
import threading
from typing import Optional, Dict, Any

from panoptic_nav.config import get_settings
from panoptic_nav.models.system_log import SystemLogCreate

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

logging.basicConfig(level=logging.INFO, format=LOG_FORMAT)

logger = logging.getLogger(__name__)

_sink_lock = threading.Lock()


def configure_logging(verbose: bool = False, level: Optional[str] = None) -> None:
    """Set the root log level from --verbose or the configured level name."""
    if verbose:
        resolved = logging.DEBUG
    else:
        resolved = getattr(logging, (level or get_settings().log_level).upper(), logging.INFO)
    logging.getLogger().setLevel(resolved)


def log_event(source: str,
              log_type: str,
              message: str,
              details: Optional[Dict[str, Any]] = None) -> None:
    """
    Log a message to the console and, when configured, to the system log file.

    Args:
        source: Log source (e.g., 'fusion', 'pipeline', 'server', 'transport')
        log_type: Log type ('info', 'warning', 'error')
        message: Log message
        details: Optional additional details
    """
    if log_type == "error":
        logger.error(f"[{source}] {message}")
    elif log_type == "warning":
        logger.warning(f"[{source}] {message}")
    else:
        logger.info(f"[{source}] {message}")

    path = get_settings().system_log_path
    if not path:
        return

    try:
        record = SystemLogCreate(
            source=source,
            log_type=log_type,
            message=message,
            details=details or {}
        )
        line = json.dumps(record.model_dump(mode="json"), sort_keys=False)
        with _sink_lock:
            with open(path, "a", encoding="utf-8") as handle:
                handle.write(line + "\n")
    except Exception as e:
        logger.error(f"Failed to write system log: {str(e)}")


def get_logger(name: str):
    """Get a logger instance with the given name."""
    return logging.getLogger(name)
