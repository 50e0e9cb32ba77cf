"""Exception types shared across the package."""


class LqrRlError(Exception):
    """Base class for all package errors."""


class ValidationError(LqrRlError, ValueError):
    pass


class SingularMatrixError(LqrRlError):
    pass


class ShapeError(LqrRlError, ValueError):
    pass


class SimulationDiverged(LqrRlError):
    pass


class LinearizationError(LqrRlError):
    pass


class RiccatiDivergence(LqrRlError):
    pass


class ModelUnavailable(LqrRlError):
    """Not enough data to fit a local model yet."""


class EmptyMemoryError(LqrRlError):
    pass


class ConfigError(LqrRlError, ValueError):
    pass


class StatisticsError(LqrRlError, ValueError):
    pass
