"""Exception types raised by chest_lab.

Plain argument problems raise ``ValueError``; the classes below cover the
failure modes callers are expected to catch and handle specifically.
"""


class ChestLabError(Exception):
    """Base class for library-specific errors."""


class PoleSingularityError(ChestLabError, ValueError):
    """Direction lies on a pole of the azimuth/elevation chart."""


class UndefinedCostError(ChestLabError, ArithmeticError):
    """The matching cost is 0/0 because the observation annihilates the atom."""


class EstimationFailure(ChestLabError):
    """No grid candidate has a defined cost."""


class NonIdentifiableError(ChestLabError, ArithmeticError):
    """Fisher information matrix is singular (or numerically so)."""

    def __init__(self, message, null_dim):
        super().__init__(message)
        self.null_dim = null_dim


class PathCSVError(ChestLabError, ValueError):
    """Malformed or out-of-range row in a path CSV file."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemaError(ChestLabError, ValueError):
    """A CSV or config file is missing required fields."""
