import sys

from loguru import logger

_LEVELS = {"error": "ERROR", "info": "INFO", "debug": "DEBUG"}


def configure_logging(level: str = "info") -> None:
    """Route loguru output to stderr at the requested level (error, info or debug)."""
    logger.remove()
    logger.add(
        sys.stderr,
        level=_LEVELS.get(level.lower(), "INFO"),
        format="<green>{time:HH:mm:ss}</green> | <level>{level: <7}</level> | {name}:{function} - {message}",
    )
