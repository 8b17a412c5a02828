"""App-wide logger setup with colors and a custom NOTICE level.

Provides a custom NOTICE level between INFO and WARNING.
Verbosity comes from the ``STGCSVR_LOG`` environment variable.
"""

import logging
import os
import sys
from typing import Any, Optional

# -------------------------------------------------------------------
# 1. Define custom level (between INFO=20 and WARNING=30)
# -------------------------------------------------------------------
NOTICE_LEVEL = 25
logging.addLevelName(NOTICE_LEVEL, "NOTICE")

LOG_ENV_VAR = "STGCSVR_LOG"

# -------------------------------------------------------------------
# 2. ANSI color setup
# -------------------------------------------------------------------
RESET = "\033[0m"
COLORS = {
    "DEBUG": "\033[36m",  # Cyan
    "INFO": "\033[32m",  # Green
    "NOTICE": "\033[38;5;33m",  # Blue-ish
    "WARNING": "\033[33m",  # Yellow
    "ERROR": "\033[31m",  # Red
    "CRITICAL": "\033[1;41m",  # White on red background
}

LEVELS = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "NOTICE": NOTICE_LEVEL,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
    "CRITICAL": logging.CRITICAL,
}


class ColorFormatter(logging.Formatter):
    """Formatter that adds color to level names when writing to a terminal."""

    def __init__(self, fmt: str, datefmt: str, use_color: bool) -> None:
        """Create the formatter; colors are skipped for non-tty streams."""
        super().__init__(fmt, datefmt=datefmt)
        self.use_color = use_color

    def format(self, record: logging.LogRecord) -> str:
        """Format log record with ANSI color codes."""
        if not self.use_color:
            return super().format(record)
        original = record.levelname
        color = COLORS.get(original, "")
        record.levelname = f"{color}{original:<7}{RESET}"
        try:
            return super().format(record)
        finally:
            record.levelname = original


# -------------------------------------------------------------------
# 3. Base formatting
# -------------------------------------------------------------------
LOG_FORMAT = "%(asctime)s | %(levelname)-7s | %(name)s | %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

handler = logging.StreamHandler(sys.stdout)
handler.setFormatter(ColorFormatter(LOG_FORMAT, DATE_FORMAT, use_color=sys.stdout.isatty()))

root_logger = logging.getLogger()
root_logger.setLevel(NOTICE_LEVEL)
root_logger.handlers.clear()
root_logger.addHandler(handler)


# -------------------------------------------------------------------
# 4. Silence noisy libraries
# -------------------------------------------------------------------
for noisy in ["joblib", "numexpr", "matplotlib"]:
    logging.getLogger(noisy).setLevel(logging.WARNING)


# -------------------------------------------------------------------
# 5. Custom logger class and helpers
# -------------------------------------------------------------------
class CustomLogger(logging.Logger):
    """Proxy that routes .info() to NOTICE internally."""

    def info(self, msg: object, *args: Any, **kwargs: Any) -> None:
        """Log message at NOTICE level instead of INFO."""
        super().log(NOTICE_LEVEL, msg, *args, **kwargs)


logging.setLoggerClass(CustomLogger)


def get_logger(name: Optional[str] = None) -> logging.Logger:
    """Return a module-specific colored logger."""
    return logging.getLogger(name or "stgcsvr")


def configure_from_env(default: str = "NOTICE") -> int:
    """Set the root level from ``STGCSVR_LOG`` and return the level applied."""
    raw = os.environ.get(LOG_ENV_VAR, default).strip().upper()
    level = LEVELS.get(raw)
    if level is None:
        level = NOTICE_LEVEL
        logger.warning("Unknown %s value %r; using NOTICE", LOG_ENV_VAR, raw)
    root_logger.setLevel(level)
    return level


# -------------------------------------------------------------------
# 6. Global shared logger
# -------------------------------------------------------------------
logger = get_logger("stgcsvr")
configure_from_env()
