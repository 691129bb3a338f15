"""Process-wide logging configuration used by the CLI."""

import logging
import os
from typing import Optional

LOG_FORMAT = "[%(asctime)s] %(levelname)s %(name)s: %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def configure_logging(verbose: bool = False, enabled: bool = True,
                      level: Optional[str] = None) -> None:
    """Configure the root ``trendlab`` logger.

    ``level`` (or ``TRENDLAB_LOG_LEVEL``) is used when neither flag forces one.
    """
    if not enabled:
        resolved = logging.WARNING
    elif verbose:
        resolved = logging.DEBUG
    else:
        name = (level or os.getenv("TRENDLAB_LOG_LEVEL") or "INFO").upper()
        resolved = getattr(logging, name, logging.INFO)

    logger = logging.getLogger("trendlab")
    logger.setLevel(resolved)
    if not logger.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT, DATE_FORMAT))
        logger.addHandler(handler)
    logger.propagate = False
