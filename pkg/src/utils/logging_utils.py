"""Logging setup for the command-line surface."""

import logging
import sys

from config import DEFAULT_LOG_LEVEL, LOG_FORMAT


def configure_logging(level: str = DEFAULT_LOG_LEVEL) -> None:
    """
    Install a single stderr handler on the root logger.

    stdout is reserved for JSON and CSV output, so log records always go to
    stderr.

    Args:
        level (str): Logging level name, e.g. "INFO".
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(handler)
    root.setLevel(level.upper())
