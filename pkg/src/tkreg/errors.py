"""Exception types shared across tkreg.

Each error maps to one CLI exit code category (see tkreg.cli): usage
errors exit 2, data errors 3, capacity errors 4, numeric errors 5.
"""


class TkregError(Exception):
    """Base class for all tkreg errors."""


class InvalidOrderError(TkregError, ValueError):
    """Tensor order is invalid for the requested operation."""


class CapacityError(TkregError):
    """A structure would exceed its configured size cap."""


class ShapeError(TkregError, ValueError):
    """Array arguments have inconsistent shapes."""


class RangeError(TkregError, OverflowError):
    """A kernel value would overflow the floating-point range."""


class NumericError(TkregError, ArithmeticError):
    """A numeric procedure produced a non-finite value or failed to solve."""


class UnsupportedKernelError(TkregError):
    """The operation is not defined for this kernel family."""


class DataFormatError(TkregError, ValueError):
    """A data file could not be parsed."""


class SubsampleError(TkregError, ValueError):
    """Subsample request is infeasible for the training set."""
