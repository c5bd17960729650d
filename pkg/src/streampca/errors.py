"""Exception types raised across the package."""


class StreamPCAError(Exception):
    """Base class for all package errors."""


class RankDeficient(StreamPCAError, ArithmeticError):
    """A matrix that must have full column rank lost it numerically.

    ``step`` is filled in by the streaming drivers when the failure happens
    at a known stochastic step.
    """

    def __init__(self, message="matrix is rank deficient", step=None):
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
        self.step = step


class NotSymmetric(StreamPCAError, ValueError):
    pass


class NotOrthonormal(StreamPCAError, ValueError):
    pass


class BadK(StreamPCAError, ValueError):
    pass


class DimensionMismatch(StreamPCAError, ValueError):
    pass


class ParseError(StreamPCAError, ValueError):
    def __init__(self, message, row=None, col=None):
        if row is not None:
            message = f"{message} at row {row}, column {col}"
        super().__init__(message)
        self.row = row
        self.col = col


class RaggedRows(ParseError):
    pass


class BadMagic(StreamPCAError, ValueError):
    pass


class TruncatedFile(StreamPCAError, ValueError):
    pass


class BadSpec(StreamPCAError, ValueError):
    pass


class ConfigError(StreamPCAError, ValueError):
    """Invalid experiment configuration; ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
