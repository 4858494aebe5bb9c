"""
Shared exception classes and error handling utilities.
"""
from typing import Optional, Dict, Any


class ReuseLearnError(Exception):
    """Base exception for the reuse-distance toolkit."""

    def __init__(
        self,
        message: str,
        error_code: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        self.message = message
        self.error_code = error_code or self.__class__.__name__
        self.details = details or {}
        super().__init__(self.message)


class ValidationError(ReuseLearnError):
    """Raised when an argument or precondition is invalid."""
    pass


class NotFoundError(ReuseLearnError):
    """Raised when an input file does not exist."""
    pass


class TraceFormatError(ReuseLearnError):
    """Raised when a trace file cannot be parsed."""

    def __init__(self, message: str, line: Optional[int] = None, **details: Any):
        if line is not None:
            details["line"] = line
            message = f"line {line}: {message}"
        super().__init__(message, details=details)


class ArtifactFormatError(ReuseLearnError):
    """Raised when a dataset or checkpoint has a bad magic or version."""
    pass


class ChecksumError(ReuseLearnError):
    """Raised when a binary artifact is truncated or corrupt."""
    pass


class TrainingError(ReuseLearnError):
    """Raised when training cannot proceed (empty split, NaN loss)."""
    pass


class PredictorError(ReuseLearnError):
    """Raised when a forward reuse distance predictor fails."""

    def __init__(self, message: str, index: int, **details: Any):
        details["index"] = index
        super().__init__(f"access {index}: {message}", details=details)


class SimulationError(ReuseLearnError):
    """Raised when a cache simulator invariant is violated."""
    pass


# Errors caused by user input rather than by the toolkit itself.
USAGE_ERRORS = (
    ValidationError,
    NotFoundError,
    TraceFormatError,
    ArtifactFormatError,
    ChecksumError,
)
