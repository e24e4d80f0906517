"""
Error types and error logging for the spiking-network toolkit.

ERROR ROUTING:
- ValidationError and its subclasses describe bad input (configuration, topology,
  shapes, event files, checkpoints). They are logged at WARNING without a traceback
  and map to exit code 1.
- RuntimeFailure and any unexpected exception are logged at ERROR/CRITICAL with a
  traceback and map to exit code 2.

Library modules raise these exceptions; only the entry point and the command modules
call handle_command_error().
"""

import logging
import traceback
from enum import Enum
from typing import Optional


EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2


class ErrorCategory(Enum):
    """Error categories for log routing."""
    CONFIG_ERROR = "config_error"
    DATA_ERROR = "data_error"
    CHECKPOINT_ERROR = "checkpoint_error"
    TRAINING_ERROR = "training_error"
    COMMAND_ERROR = "command_error"
    OTHER = "other"


class ErrorSeverity(Enum):
    """Severity levels, each bound to a logging level."""
    INFO = ("info", logging.INFO)
    WARNING = ("warning", logging.WARNING)
    ERROR = ("error", logging.ERROR)
    CRITICAL = ("critical", logging.CRITICAL)

    def __init__(self, name, level):
        self.severity_name = name
        self.level = level


class SnnError(Exception):
    """Base class for every error raised by the toolkit."""
    category = ErrorCategory.OTHER
    exit_code = EXIT_RUNTIME


class ValidationError(SnnError):
    """Input rejected before any work was done."""
    exit_code = EXIT_VALIDATION


class ConfigError(ValidationError):
    category = ErrorCategory.CONFIG_ERROR


class TopologyError(ValidationError):
    category = ErrorCategory.CONFIG_ERROR


class ShapeError(ValidationError):
    category = ErrorCategory.DATA_ERROR


class EncodingError(ValidationError):
    category = ErrorCategory.DATA_ERROR


class EnumerationLimitError(ValidationError):
    category = ErrorCategory.TRAINING_ERROR


class EventFormatError(ValidationError):
    """Malformed event file. Carries the 1-based line (text) or byte offset (binary)."""
    category = ErrorCategory.DATA_ERROR

    def __init__(self, message: str, line: Optional[int] = None, offset: Optional[int] = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte offset {offset}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.offset = offset


class CheckpointError(ValidationError):
    """Unreadable checkpoint. Carries the byte offset of the offending line."""
    category = ErrorCategory.CHECKPOINT_ERROR

    def __init__(self, message: str, offset: Optional[int] = None):
        super().__init__(f"{message} (byte offset {offset})" if offset is not None else message)
        self.offset = offset


class RuntimeFailure(SnnError):
    """Failure during work that had valid input (I/O, numerical blow-up)."""
    category = ErrorCategory.TRAINING_ERROR


def _determine_severity(error: BaseException) -> ErrorSeverity:
    if isinstance(error, ValidationError):
        return ErrorSeverity.WARNING
    if isinstance(error, SnnError):
        return ErrorSeverity.ERROR
    return ErrorSeverity.CRITICAL


def _determine_category(error: BaseException, default: ErrorCategory = ErrorCategory.OTHER) -> ErrorCategory:
    return getattr(error, "category", default)


def exit_code_for(error: BaseException) -> int:
    """Map an exception to the process exit code."""
    return getattr(error, "exit_code", EXIT_RUNTIME)


def log_error(
    logger: logging.Logger,
    error: BaseException,
    context: str,
    category: Optional[ErrorCategory] = None,
    severity: Optional[ErrorSeverity] = None,
    extra_info: str = "",
) -> None:
    """
    Log an error with its category and severity.

    Args:
        logger: Destination logger
        error: The exception that occurred
        context: Context string (e.g., 'command_train', 'load_events')
        category: Error category; taken from the exception class when omitted
        severity: Severity level; derived from the exception type when omitted
        extra_info: Additional contextual information appended to the message
    """
    category = category or _determine_category(error)
    severity = severity or _determine_severity(error)

    message = f"[{category.value}] {context}: {type(error).__name__}: {error}"
    if extra_info:
        message += f" | {extra_info}"

    if severity in (ErrorSeverity.INFO, ErrorSeverity.WARNING):
        logger.log(severity.level, message)
    else:
        tb = "".join(traceback.format_exception(type(error), error, error.__traceback__))
        logger.log(severity.level, f"{message}\n{tb}")


def handle_command_error(logger: logging.Logger, command: str, error: BaseException) -> int:
    """
    Handle an exception that escaped a subcommand.

    Args:
        logger: Logger used for the report
        command: Subcommand name
        error: The exception that occurred

    Returns:
        int: Exit code for the process
    """
    try:
        log_error(logger, error, f"command_{command}",
                  category=_determine_category(error, ErrorCategory.COMMAND_ERROR))
    except Exception as log_failure:
        logger.error(f"Failed to log error from command {command}: {log_failure}")
    return exit_code_for(error)
