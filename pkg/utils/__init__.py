"""
Logging setup shared by the command line and the tests.
"""

import logging
import os
import sys
from typing import Optional

DEBUG_ENV = "DEBUG"
CONSOLE_FORMAT = "%(levelname)s %(name)s: %(message)s"
FILE_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


def debug_requested() -> bool:
    return os.environ.get(DEBUG_ENV, "").strip().lower() in ("1", "true", "yes", "on")


def setup_logging(log_file: Optional[str] = None, console_level: int = logging.WARNING,
                  file_level: int = logging.INFO) -> logging.Logger:
    """
    Root logger with a stderr handler, so CSV and JSON on stdout stay clean, and an
    optional appending file handler. DEBUG=true lowers the console level to DEBUG.
    """
    root = logging.getLogger()
    root.setLevel(logging.DEBUG)
    for handler in list(root.handlers):
        root.removeHandler(handler)

    console = logging.StreamHandler(sys.stderr)
    console.setLevel(logging.DEBUG if debug_requested() else console_level)
    console.setFormatter(logging.Formatter(CONSOLE_FORMAT))
    root.addHandler(console)

    if log_file:
        appender = logging.FileHandler(log_file, mode="a")
        appender.setLevel(file_level)
        appender.setFormatter(logging.Formatter(FILE_FORMAT, datefmt=DATE_FORMAT))
        root.addHandler(appender)
    return root
