"""Exception hierarchy shared by all poismix modules."""


class PoismixError(Exception):
    """Base class for every error raised by this package."""


class InvalidParameterError(PoismixError, ValueError):
    """Parameters are non-finite or have inconsistent shapes."""


class OutOfDomainError(PoismixError, ValueError):
    """Mean parameters lie on or beyond the boundary of their domain."""


class DegenerateComponentError(PoismixError, ArithmeticError):
    """A mixture component received (numerically) zero responsibility."""


class RestartAbortedError(PoismixError, ArithmeticError):
    """A descent produced a non-finite gradient and must be abandoned."""


class FitFailureError(PoismixError, RuntimeError):
    """Every restart of a fit was aborted."""


class SchemaError(PoismixError, ValueError):
    """An input file does not match the expected schema or version."""


class ConfigError(PoismixError, ValueError):
    """A run configuration is invalid."""
