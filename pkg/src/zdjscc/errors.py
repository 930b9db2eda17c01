"""Exception hierarchy shared across the package."""


class ZdjsccError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(ZdjsccError, ValueError):
    """A model or configuration parameter is outside its valid domain."""


class InvalidArgumentError(ZdjsccError, ValueError):
    """Arguments are individually valid but inconsistent with each other."""


class InvalidStateError(ZdjsccError, RuntimeError):
    """An operation was requested on an object that is not ready for it."""


class NumericalDomainError(ZdjsccError, ArithmeticError):
    """A non-finite value appeared where a finite one is required."""


class UnsupportedError(ZdjsccError, NotImplementedError):
    """The requested computation has no implementation for this input."""


class ConfigError(ZdjsccError, ValueError):
    """An experiment configuration could not be parsed or validated."""


class BoundViolationError(ZdjsccError, AssertionError):
    """A reported distortion fell below its information-theoretic bound."""
