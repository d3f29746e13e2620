"""Exception types shared across the package."""


class IUKitError(Exception):
    """Base class for all package errors."""


class ConfigError(IUKitError, ValueError):
    """Invalid configuration value or schema violation.

    ``path`` holds the offending key path when known.
    """

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = tuple(path) if path is not None else ()


class DomainError(IUKitError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class NumericError(IUKitError, RuntimeError):
    """A numerical routine failed; ``partial`` carries the best result so far."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class QuadratureError(NumericError):
    """Quadrature did not reach the requested tolerance."""


class ConvergenceError(NumericError):
    """An iterative solver hit its iteration cap."""


class DiscretizationError(NumericError):
    """The discrete model violates a structural requirement."""
