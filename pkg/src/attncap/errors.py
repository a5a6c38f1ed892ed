class DimensionError(ValueError):
    """Raised when tensor or parameter extents are incompatible."""


class ContractError(ValueError):
    """Raised when an operation's precondition is violated."""


class DataError(RuntimeError):
    """Raised for unreadable or malformed on-disk data."""


class NumericError(ArithmeticError):
    """Raised when a computation produces a non-finite value."""
