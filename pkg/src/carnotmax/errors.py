"""Exception hierarchy shared by every module."""


class CarnotError(Exception):
    """Base class for library errors."""


class InputError(CarnotError, ValueError):
    """Bad argument: wrong dimension, out-of-range exponent, invalid config."""


class DataError(CarnotError, ValueError):
    """Inconsistent data, e.g. grid functions living on different lattices."""


class RefusalError(CarnotError):
    """Request refused because it is too large or too coarse to be trustworthy."""


class ConvergenceError(CarnotError):
    """An iterative procedure did not reach its fixpoint."""
