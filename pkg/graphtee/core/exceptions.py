from typing import Any, Dict, Optional

from pydantic import BaseModel

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class ErrorRecord(BaseModel):
    """Structured form of an error, as written into failed experiment cells."""
    type: str
    detail: str
    context: Dict[str, Any] = {}

    @classmethod
    def from_exception(cls, exc: BaseException) -> "ErrorRecord":
        if isinstance(exc, AppException):
            return exc.to_record()
        return cls(type=type(exc).__name__, detail=str(exc))

    def __str__(self) -> str:
        return f"{self.type}: {self.detail}"


class AppException(Exception):
    """Base exception for application-specific exceptions.

    This class serves as the base for all GraphTEE errors. It carries a
    detail message, the process exit code the CLI should return, and
    optional structured context.
    """
    default_detail = "An unexpected error occurred"
    exit_code = EXIT_FAILURE

    def __init__(
        self,
        detail: Optional[str] = None,
        context: Optional[Dict[str, Any]] = None,
        exit_code: Optional[int] = None,
    ):
        self.detail = detail or self.default_detail
        self.context = context or {}
        if exit_code is not None:
            self.exit_code = exit_code
        super().__init__(self.detail)

    def to_record(self) -> ErrorRecord:
        """Convert to a serializable error record."""
        context = {
            key: value if isinstance(value, (str, int, float, bool)) or value is None else str(value)
            for key, value in self.context.items()
        }
        return ErrorRecord(type=type(self).__name__, detail=self.detail, context=context)


class ShapeError(AppException):
    """Raised when operand shapes do not conform."""
    default_detail = "Shape mismatch"

    def __init__(self, op: str, *shapes: Any):
        rendered = " vs ".join(str(tuple(s)) for s in shapes)
        super().__init__(f"{op}: shapes do not conform: {rendered}", {"op": op})


class IndexRangeError(AppException):
    """Raised when a gather or segment index falls outside its range."""
    default_detail = "Index out of range"


class ContractError(AppException):
    """Raised when a caller violates an operation's contract."""
    default_detail = "Contract violated"


class EvaluationError(AppException):
    """Raised when a computation produces non-finite values."""
    default_detail = "Non-finite value encountered"


class ParameterError(AppException):
    """Raised when a parameter is outside its valid range."""
    default_detail = "Invalid parameter"


class ParseError(AppException):
    """Raised when an input file line cannot be parsed."""
    default_detail = "Parse error"

    def __init__(self, path: str, line_number: int, detail: str):
        super().__init__(
            f"{path}:{line_number}: {detail}",
            {"path": path, "line": line_number},
        )
        self.path = path
        self.line_number = line_number


class ConsistencyError(AppException):
    """Raised when inputs are well-formed but contradict each other."""
    default_detail = "Inconsistent input"


class IngestionError(AppException):
    """Raised when an external graph source is missing or unusable."""
    default_detail = "Graph ingestion failed"


class DatasetFormatError(AppException):
    """Raised when a dataset or checkpoint file cannot be loaded."""
    default_detail = "Malformed dataset file"


class PreconditionError(AppException):
    """Raised when a mathematical precondition does not hold."""
    default_detail = "Precondition not satisfied"


class TrainingError(AppException):
    """Raised when optimization cannot proceed."""
    default_detail = "Training failed"


class ConfigurationError(AppException):
    """Raised when there is a configuration error."""
    default_detail = "Configuration error"


class UsageError(AppException):
    """Raised for invalid command-line usage."""
    default_detail = "Invalid usage"
    exit_code = EXIT_USAGE
