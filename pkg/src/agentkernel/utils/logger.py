"""
Logging configuration for agentkernel

Writes logs to both console and file for debugging.
"""

import logging
import sys
from pathlib import Path
from typing import Optional


# Log file location
LOG_DIR = Path.home() / ".local" / "share" / "agentkernel"
LOG_FILE = LOG_DIR / "agentkernel.log"

LOG_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s | %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def setup_logging(debug: bool = False, log_file: Optional[Path] = None) -> logging.Logger:
    """
    Setup application logging

    Args:
        debug: Enable debug level logging on the console
        log_file: Override the default log file location

    Returns:
        Configured logger
    """
    global LOG_FILE

    if log_file is not None:
        LOG_FILE = Path(log_file)

    # Create log directory
    LOG_FILE.parent.mkdir(parents=True, exist_ok=True)

    logger = logging.getLogger("agentkernel")
    logger.setLevel(logging.DEBUG)

    # Clear existing handlers
    for handler in list(logger.handlers):
        handler.close()
    logger.handlers.clear()

    fmt = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    # File handler - always debug level for troubleshooting
    file_handler = logging.FileHandler(LOG_FILE, encoding="utf-8")
    file_handler.setLevel(logging.DEBUG)
    file_handler.setFormatter(fmt)
    logger.addHandler(file_handler)

    # Console handler goes to stderr so report output on stdout stays clean
    console_handler = logging.StreamHandler(sys.__stderr__)
    console_handler.setLevel(logging.DEBUG if debug else logging.INFO)
    console_handler.setFormatter(fmt)
    logger.addHandler(console_handler)

    logger.debug("=" * 60)
    logger.debug("agentkernel logging started")
    logger.debug(f"Log file: {LOG_FILE}")
    logger.debug("=" * 60)

    return logger


def get_logger(name: str = "agentkernel") -> logging.Logger:
    """Get a logger instance"""
    return logging.getLogger(name)


def get_log_file() -> Path:
    """Get log file path"""
    return LOG_FILE
