"""Exception and warning types shared across the toolkit."""

from __future__ import annotations


class RuletagError(Exception):
    """Base class for all toolkit errors."""


class EmptyInput(RuletagError):
    """Raised when an operation receives empty or whitespace-only input."""


class ParseError(RuletagError):
    """Raised when a file cannot be parsed.

    Carries the 1-based line number when the failure is line-local.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(RuletagError):
    """Raised when parsed data violates a structural contract."""


class ValidationError(RuletagError):
    """Raised when a rule file contains invalid entries."""


class ConflictError(ValidationError):
    """Raised when rule tiers contradict each other."""


class ConfigError(RuletagError):
    """Raised when a configuration value is missing or out of range."""


class ShapeError(RuletagError):
    """Raised on dimension mismatches between arrays."""


class LengthError(RuletagError):
    """Raised when a sentence exceeds the model's maximum sequence length."""


class NumericalError(RuletagError):
    """Raised when a computation produces non-finite values."""


class IoError(RuletagError):
    """Raised when reading or writing a data file fails."""


class DegenerateRulesWarning(UserWarning):
    """Warns that no token in the corpus is covered by any rule tier."""
