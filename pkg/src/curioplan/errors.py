"""Exception types shared across the package."""


class CurioplanError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(CurioplanError, ValueError):
    """An argument violates a documented precondition."""


class InsufficientDataError(CurioplanError, ValueError):
    """An operation needs more data points than were provided."""


class NumericalError(CurioplanError, RuntimeError):
    """A numerical routine failed (factorization, non-finite values, ...)."""


class ConfigError(CurioplanError, ValueError):
    """Experiment configuration is malformed or violates a gate."""
