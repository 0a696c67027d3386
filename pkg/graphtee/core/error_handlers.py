import functools
import traceback
from typing import Callable

import pydantic

from graphtee.core.exceptions import EXIT_FAILURE, AppException, ConfigurationError
from graphtee.core.logging import app_logger


def with_error_handling(func: Callable[..., int]) -> Callable[..., int]:
    """Decorator that turns a command function into an exit-status function.

    ``AppException`` is logged and mapped to its own exit code; a pydantic
    validation error is reported as a configuration error; anything else
    is logged with its traceback and exits 1.

    Args:
        func: The command to wrap; it returns an exit status

    Returns:
        Wrapped function that never raises
    """

    @functools.wraps(func)
    def wrapper(*args, **kwargs) -> int:
        try:
            return func(*args, **kwargs)
        except AppException as exc:
            app_logger.error(f"{type(exc).__name__} in {func.__name__}: {exc.detail}")
            return exc.exit_code
        except pydantic.ValidationError as exc:
            error = ConfigurationError(str(exc))
            app_logger.error(f"ConfigurationError in {func.__name__}: {error.detail}")
            return error.exit_code
        except Exception as exc:
            app_logger.error(
                f"Unhandled exception in {func.__name__}: {exc}\n{traceback.format_exc()}"
            )
            return EXIT_FAILURE

    return wrapper
