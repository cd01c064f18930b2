"""Exception types shared across the package."""


class DomainError(ValueError):
    """A parameter lies outside its physical domain (negative mean, eta > 1, ...)."""


class CalibrationError(ValueError):
    """Shot records or Fano points cannot support a gain calibration."""


class FitError(CalibrationError):
    """The Fano-factor regression failed or produced a non-physical gain.

    The offending fit, when one exists, is attached as ``result``.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class QuadratureError(ArithmeticError):
    """Numerical integration did not reach the requested tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(ValueError):
    """Invalid run configuration; ``keys`` lists the offending entries."""

    def __init__(self, message, keys=()):
        super().__init__(message)
        self.keys = list(keys)


class TruncationWarning(UserWarning):
    """Probability mass beyond the truncation exceeds the tail tolerance."""
