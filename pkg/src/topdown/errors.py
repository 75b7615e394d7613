"""Exception hierarchy shared by all modules."""


class TopDownError(Exception):
    """Base class for errors raised by this package."""


class DimensionError(TopDownError, ValueError):
    """Array shapes or sizes are incompatible or invalid."""


class ConfigurationError(TopDownError, ValueError):
    """A circuit, sweep or run configuration is invalid."""


class NotUnitaryError(TopDownError, ValueError):
    pass


class InvalidStateError(TopDownError, ValueError):
    """A density matrix violates Hermiticity, positivity or unit trace."""


class UndefinedFidelityError(TopDownError, ValueError):
    pass


class UnsupportedDimensionError(TopDownError, ValueError):
    pass


class AnnihilatedStateError(TopDownError, ValueError):
    """The local operation maps the state to zero."""


class UnderdeterminedError(TopDownError, ValueError):
    pass


class OptimizationError(TopDownError, RuntimeError):
    """Gradient descent diverged; ``best`` holds the best iterate found."""

    def __init__(self, message, best=None, report=None):
        super().__init__(message)
        self.best = best
        self.report = report
