"""Exception hierarchy.

Every error raised deliberately by the package derives from
:class:`TrustSenseError`, so callers (the CLI in particular) can separate
data/runtime failures from programming errors.
"""


class TrustSenseError(Exception):
    """Base class for all package errors."""


class InvalidSignalError(TrustSenseError, ValueError):
    pass


class UndefinedSpectrumError(InvalidSignalError):
    """Signal has zero spectral power, so its mean frequency is undefined."""


class EmptyBandError(InvalidSignalError):
    """No DFT bin falls inside the requested band."""


class UndefinedCorrelationError(InvalidSignalError):
    pass


class InvalidWindowError(InvalidSignalError):
    pass


class SchemaError(TrustSenseError, ValueError):
    pass


class ParameterError(TrustSenseError, ValueError):
    pass


class ParseError(TrustSenseError, ValueError):
    """CSV parse failure; carries the 1-based row and the column name when known."""

    def __init__(self, message, row=None, column=None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class LabelError(TrustSenseError, ValueError):
    pass


class BalanceError(TrustSenseError, ValueError):
    pass


class SplitError(TrustSenseError, ValueError):
    pass


class BuildError(TrustSenseError, ValueError):
    pass


class ShapeError(TrustSenseError, ValueError):
    pass


class TrainingError(TrustSenseError, RuntimeError):
    def __init__(self, message, epoch=None):
        self.epoch = epoch
        super().__init__(message)


class EstimatorError(TrustSenseError, ValueError):
    pass


class NumericError(TrustSenseError, ArithmeticError):
    pass


class EvaluationError(TrustSenseError, ValueError):
    pass


class LeakageError(EvaluationError):
    """Train and validation tables share a subject."""
