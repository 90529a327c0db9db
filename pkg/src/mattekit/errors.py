"""Exception hierarchy shared by all mattekit modules."""


class MatteKitError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(MatteKitError, ValueError):
    """Dimensions or channel counts of the inputs do not agree."""


class ArgumentError(MatteKitError, ValueError):
    """An argument value is outside what the operation accepts."""


class DomainError(MatteKitError, ValueError):
    """A numeric value is outside its required domain (e.g. alpha not in [0, 1])."""


class ConfigError(MatteKitError, ValueError):
    """A configuration object is internally inconsistent."""


class DegenerateInputError(MatteKitError, ValueError):
    """Input is degenerate for the requested metric (e.g. empty matte)."""


class StateError(MatteKitError, RuntimeError):
    """An operation was called with stale or mismatched cached state."""


class NumericError(MatteKitError, ArithmeticError):
    """A computation produced a non-finite value.

    ``step`` carries the iteration index when raised inside a fitting loop.
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
