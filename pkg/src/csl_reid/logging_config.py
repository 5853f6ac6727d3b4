"""Logging configuration module for csl-reid."""

import logging
import os
import sys

from csl_reid.config import APP_NAME, DEBUG_ENV

DEFAULT_LOG_FORMAT = "%(asctime)s %(levelname)-8s %(name)s: %(message)s"
DEFAULT_DATE_FORMAT = "%H:%M:%S"

# Marks the handlers installed here so repeated calls replace instead of stacking.
_HANDLER_TAG = "_csl_reid_handler"


def _tagged(handler, level, fmt=DEFAULT_LOG_FORMAT):
    handler.setLevel(level)
    handler.setFormatter(logging.Formatter(fmt, DEFAULT_DATE_FORMAT))
    setattr(handler, _HANDLER_TAG, True)
    return handler


def setup_logging(level=None, debug=False, stdout=True, logfile=None):
    """Sets up the csl-reid logger.

    Args:
        level (logging.LEVEL): The level to log at.
        debug (bool): Set log level to debug if level is not set.
        stdout (bool): Enable stdout logging.
        logfile (str): Also log to this file, always at DEBUG.

    Returns:
        logging.Logger: The package logger.
    """
    log_level = logging.INFO
    if level:
        log_level = level
    elif debug or os.environ.get(DEBUG_ENV) == "1":
        log_level = logging.DEBUG

    try:
        logger = logging.getLogger(APP_NAME)
        for handler in list(logger.handlers):
            if getattr(handler, _HANDLER_TAG, False):
                logger.removeHandler(handler)
                handler.close()

        if logfile:
            os.makedirs(os.path.dirname(os.path.abspath(logfile)), exist_ok=True)
            logger.addHandler(_tagged(logging.FileHandler(logfile), logging.DEBUG))

        if stdout:
            logger.addHandler(_tagged(logging.StreamHandler(sys.stdout), log_level))

        logger.setLevel(logging.DEBUG if logfile else log_level)
        # Turn off propagation to avoid double console prints
        logger.propagate = False

        return logger

    except Exception as exc:
        sys.stderr.write("Error initializing logger: {0}\n".format(str(exc)))
        logger = logging.getLogger(APP_NAME)
        logger.setLevel(log_level)
        return logger
