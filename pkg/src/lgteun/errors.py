"""Exception hierarchy shared by every lgteun module."""


class LgteunError(Exception):
    """Base class for all library errors."""


class ShapeError(LgteunError, ValueError):
    """Tensor extents violate an operation's contract."""


class ContractError(LgteunError, ValueError):
    """A precondition on arguments (not shapes) was violated."""


class InvalidValueError(LgteunError, ValueError):
    """Non-finite or otherwise unusable numeric input."""


class FormatError(LgteunError, ValueError):
    """A file on disk does not follow the expected binary layout."""


class DivergenceError(LgteunError, RuntimeError):
    """An iterative solver's objective blew up."""


class TrainingDivergedError(LgteunError, RuntimeError):
    """Training produced a non-finite loss."""


class DegenerateInputError(LgteunError, ValueError):
    """A metric cannot be evaluated on the given data."""
