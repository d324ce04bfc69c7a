"""Exception hierarchy. The CLI maps ArgumentError to exit code 1 and
data/degeneracy errors to exit code 2."""


class JKGEError(Exception):
    """Base class for all package errors."""


class ArgumentError(JKGEError, ValueError):
    """An argument is outside its documented range."""


class IngestionError(JKGEError, ValueError):
    """A CSV record could not be parsed."""

    def __init__(self, message, row=None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


class DegenerateInputError(JKGEError, ArithmeticError):
    """The data make a metric undefined (zero variance, zero mean, ...)."""


class GradientUndefinedError(DegenerateInputError):
    """The metric is not differentiable at the evaluation point."""


class CalibrationError(JKGEError, RuntimeError):
    """Optimization aborted or every seed failed."""
