"""Exception hierarchy."""


class FictPlayError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(FictPlayError, ValueError):
    """An input violates a documented precondition (bad density, bad n, ...)."""


class DimensionError(ValidationError):
    """Arrays or grids that must agree in shape do not."""


class CapacityError(FictPlayError):
    """A problem is too large for the requested exact method."""


class ConfigurationError(FictPlayError):
    """A run configuration is invalid (schema, CFL, ...)."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class DivergenceError(FictPlayError):
    """A solver produced non-finite values."""

    def __init__(self, message, iteration=None):
        self.iteration = iteration
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)


class SchemeError(FictPlayError):
    """A discretization left its validity range (positivity, monotonicity)."""


class StalenessError(FictPlayError):
    """A quantity was requested against a best response computed for another belief."""
