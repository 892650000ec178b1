from __future__ import annotations


class ScsFriError(Exception):
    """Base class for every error raised by the package."""


class InputError(ScsFriError, ValueError):
    pass


class ConfigError(InputError):
    pass


class LayoutError(InputError):
    pass


class AliasingError(LayoutError):
    pass


class NumericalError(ScsFriError, ArithmeticError):
    pass


class DegenerateGeometryError(NumericalError):
    pass


class NotPsdError(NumericalError):
    pass


class IllConditionedError(NumericalError):
    pass


class CorrelationModelError(NumericalError):
    """Correlation matrix with a clearly negative eigenvalue."""


class BoundDivergenceError(NumericalError):
    pass
