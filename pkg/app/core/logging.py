"""
Logging setup
One-time configuration of the standard logging tree for the lab
"""
import logging
from typing import Optional

from app.core.config import settings

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"
DATE_FORMAT = "%H:%M:%S"


def configure_logging(level: Optional[str] = None) -> None:
    """
    Configure root logging for CLI runs

    Args:
        level: Explicit level name; defaults to settings.log_level_name
    """
    logging.basicConfig(
        level=(level or settings.log_level_name).upper(),
        format=LOG_FORMAT,
        datefmt=DATE_FORMAT,
        force=True,
    )
