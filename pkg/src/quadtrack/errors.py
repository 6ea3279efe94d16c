"""Exception types shared across the package."""


class QuadtrackError(Exception):
    """Base class for all package errors."""


class ShapeError(QuadtrackError, ValueError):
    """Operand shapes are incompatible."""


class NonFiniteError(QuadtrackError, ValueError):
    """An operation produced NaN or Inf."""


class GeometryError(QuadtrackError, ValueError):
    """Degenerate or otherwise invalid geometry."""


class UsageError(QuadtrackError, ValueError):
    """API misuse: bad arguments, wrong call order."""


class DataError(QuadtrackError):
    """Malformed or inconsistent input data."""


class TrainingDiverged(QuadtrackError, RuntimeError):
    """Raised by the toy trainer when the loss blows up."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
