"""Core module for the application.

This module contains core functionality for the application, including:
- Configuration management
- Logging
- Exception handling
- Resource diagnostics
- Hashing, seeding and path utilities

These components provide the foundation for the application and should be
imported and used by other modules as needed.
"""

# This directory contains modules for:
# - config.py: Process settings and environment variables
# - logging.py: Logging setup and configuration
# - exceptions.py: Custom exception classes and exit codes
# - error_handlers.py: Error handling for CLI commands
# - health.py: Process and host resource snapshots
# - utils.py: Config hashing, seed streams, output naming

# Import core modules for easy access
from graphtee.core.config import settings
from graphtee.core.logging import setup_logging, app_logger, get_logger, log_structured
from graphtee.core.exceptions import (
    AppException,
    ShapeError,
    IndexRangeError,
    ContractError,
    EvaluationError,
    ParameterError,
    ParseError,
    ConsistencyError,
    IngestionError,
    DatasetFormatError,
    PreconditionError,
    TrainingError,
    ConfigurationError,
    UsageError,
)
from graphtee.core.error_handlers import with_error_handling
from graphtee.core.health import HealthCheck, ResourceTimer
from graphtee.core.utils import config_hash, derive_seed, stream_rng

__all__ = [
    "settings",
    "setup_logging",
    "app_logger",
    "get_logger",
    "log_structured",
    "AppException",
    "ShapeError",
    "IndexRangeError",
    "ContractError",
    "EvaluationError",
    "ParameterError",
    "ParseError",
    "ConsistencyError",
    "IngestionError",
    "DatasetFormatError",
    "PreconditionError",
    "TrainingError",
    "ConfigurationError",
    "UsageError",
    "with_error_handling",
    "HealthCheck",
    "ResourceTimer",
    "config_hash",
    "derive_seed",
    "stream_rng",
]
