"""Project-wide logger factory."""
import logging
import os

_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def get_logger(name: str = "clickmodels") -> logging.Logger:
    """
    Get a logger under the ``clickmodels`` namespace.

    The root package logger gets a single stream handler on first use; its level
    comes from ``CLICKMODELS_LOG_LEVEL`` (default INFO).

    Args:
        name: Logger name, usually ``__name__``

    Returns:
        logging.Logger: Configured logger
    """
    root = logging.getLogger("clickmodels")
    if not root.handlers:
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(_FORMAT))
        root.addHandler(handler)
        root.propagate = False
    root.setLevel(os.getenv("CLICKMODELS_LOG_LEVEL", "INFO").upper())
    return logging.getLogger(name)
