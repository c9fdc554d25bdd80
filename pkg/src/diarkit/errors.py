"""Exception hierarchy shared by all diarkit modules."""


class DiarkitError(Exception):
    """Base class for every error raised by diarkit."""


class ParseError(DiarkitError, ValueError):
    """A text artifact could not be parsed. Carries the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(ParseError):
    """Input parsed but violates a data invariant."""


class FormatError(ParseError):
    """Embedding table layout is inconsistent (dimension, non-finite values)."""


class ConfigError(DiarkitError, ValueError):
    """Invalid or unsatisfiable configuration."""


class DomainError(DiarkitError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class TrainingError(DiarkitError):
    """Model estimation failed."""


class NumericalError(DiarkitError, ArithmeticError):
    """Non-finite or singular quantity met during computation."""
