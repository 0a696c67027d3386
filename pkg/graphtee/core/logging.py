import logging
import os
import sys
from logging.handlers import RotatingFileHandler
from typing import Any, Dict, Optional

from pythonjsonlogger import jsonlogger

from graphtee.core.config import settings

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"

# Create a logger for the application
app_logger = logging.getLogger(settings.app_name)
app_logger.propagate = False

# Handlers are module-level so that get_logger can share them
console_handler = logging.StreamHandler(sys.stderr)
file_handler: Optional[RotatingFileHandler] = None


def _make_formatter(json_logs: bool) -> logging.Formatter:
    if json_logs:
        return jsonlogger.JsonFormatter(LOG_FORMAT, datefmt=DATE_FORMAT)
    return logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)


def setup_logging(
    level: Optional[str] = None,
    json_logs: Optional[bool] = None,
    log_file: Optional[str] = None,
) -> logging.Logger:
    """Configure the application logger.

    Args:
        level: Log level name; defaults to ``settings.log_level``
        json_logs: Emit JSON lines instead of plain text; defaults to ``settings.log_json``
        log_file: Optional path of a rotating log file; defaults to ``settings.log_file``

    Returns:
        The configured application logger
    """
    global file_handler

    level = (level or settings.log_level).upper()
    json_logs = settings.log_json if json_logs is None else json_logs
    log_file = log_file or settings.log_file

    formatter = _make_formatter(json_logs)
    console_handler.setFormatter(formatter)
    if console_handler not in app_logger.handlers:
        app_logger.addHandler(console_handler)

    if log_file and file_handler is None:
        log_dir = os.path.dirname(log_file)
        if log_dir:
            os.makedirs(log_dir, exist_ok=True)
        # 10 MB max size, keep 5 backup files
        file_handler = RotatingFileHandler(log_file, maxBytes=10 * 1024 * 1024, backupCount=5)
        file_handler.setFormatter(formatter)
        app_logger.addHandler(file_handler)

    app_logger.setLevel(getattr(logging, level, logging.INFO))
    return app_logger


def get_logger(name: str, level: Optional[str] = None) -> logging.Logger:
    """Create a logger for a specific module.

    Module loggers are children of the application logger, so they share
    its handlers and level.

    Args:
        name: The name of the module (typically __name__)
        level: Optional log level override

    Returns:
        A configured logger instance
    """
    if not name.startswith(settings.app_name):
        name = f"{settings.app_name}.{name}"
    logger = logging.getLogger(name)
    if level and level.upper() in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
        logger.setLevel(getattr(logging, level.upper()))
    return logger


def log_structured(logger: logging.Logger, level: str, message: str, data: Dict[str, Any]) -> None:
    """Log a message with structured data.

    With JSON logging enabled the fields of ``data`` become top-level keys
    of the record; with plain text they are appended to the message.

    Args:
        logger: The logger instance
        level: The log level (debug, info, warning, error, critical)
        message: The log message
        data: Dictionary of structured data to include
    """
    log_level = getattr(logging, level.upper(), logging.INFO)
    if not logger.isEnabledFor(log_level):
        return
    if settings.log_json:
        logger.log(log_level, message, extra=data)
    else:
        rendered = " ".join(f"{key}={value}" for key, value in data.items())
        logger.log(log_level, f"{message} - {rendered}")


setup_logging()
