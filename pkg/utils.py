import logging
import sys
import os
from typing import Optional

import numpy as np

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def setup_logger(name: str = "SuperfluidLab", log_file: Optional[str] = None) -> logging.Logger:
    logger = logging.getLogger(name)
    logger.setLevel(logging.DEBUG)

    formatter = logging.Formatter(LOG_FORMAT)

    # Console Handler
    if not logger.handlers:
        ch = logging.StreamHandler(sys.stdout)
        ch.setLevel(logging.INFO)
        ch.setFormatter(formatter)
        logger.addHandler(ch)

    # File Handler
    if log_file:
        attach_log_file(logger, log_file)

    return logger


def attach_log_file(logger: logging.Logger, log_file: str) -> logging.Handler:
    directory = os.path.dirname(log_file)
    if directory:
        os.makedirs(directory, exist_ok=True)
    fh = logging.FileHandler(log_file, encoding="utf-8")
    fh.setLevel(logging.DEBUG)
    fh.setFormatter(logging.Formatter(LOG_FORMAT))
    logger.addHandler(fh)
    return fh


def attach_run_log(log_file: str) -> logging.Handler:
    """
    Route every module logger of this package into one run log.
    Module loggers propagate to the root logger, so a single handler there suffices.
    """
    root = logging.getLogger()
    root.setLevel(logging.DEBUG)
    return attach_log_file(root, log_file)


def detach_handler(handler: logging.Handler):
    for name in [None] + list(logging.root.manager.loggerDict):
        logger = logging.getLogger(name)
        if handler in logger.handlers:
            logger.removeHandler(handler)
    handler.close()


def ensure_dir(path: str):
    if not os.path.exists(path):
        os.makedirs(path)


def format_float(value: float) -> str:
    """
    17 significant digits: round-trips every IEEE double bit-exactly.
    """
    return format(float(value), ".17g")


def format_short(value: float, digits: int = 10) -> str:
    """
    Human-facing number for reports, e.g. 2.0000000000000004 -> "2.0".
    """
    if not np.isfinite(value):
        return str(value)
    return repr(float(format(float(value), f".{digits}g")))
