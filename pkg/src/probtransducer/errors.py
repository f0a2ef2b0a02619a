"""Exception hierarchy shared by all modules.

The CLI maps each subclass to a distinct exit status.
"""


class TransducerError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class ParseError(TransducerError):
    """Malformed input file. ``line`` is 1-based when known."""

    exit_code = 3

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class DimensionError(TransducerError, ValueError):
    exit_code = 4


class CoverageError(TransducerError):
    """The integration grid misses too much of the output mass."""

    exit_code = 5

    def __init__(self, message, attained_mass):
        super().__init__(message)
        self.attained_mass = attained_mass


class UndefinedConditionalError(TransducerError, ZeroDivisionError):
    exit_code = 6


class EmptyDataError(TransducerError, ValueError):
    exit_code = 7


class DiagnosticUnavailableError(TransducerError):
    exit_code = 8


class NoScaleError(TransducerError, ValueError):
    """A constant utility matrix has no canonical form."""

    exit_code = 9


class VersionMismatchError(ParseError):
    exit_code = 10


class InvalidOutputError(TransducerError, ValueError):
    """Classifier output with non-finite entries."""

    exit_code = 3
