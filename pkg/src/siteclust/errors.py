"""Exception types raised across the package."""


class SiteClustError(Exception):
    """Base class for all package errors."""


class SchemaError(SiteClustError, ValueError):
    pass


class EmptyInputError(SiteClustError, ValueError):
    pass


class SplitError(SiteClustError, ValueError):
    pass


class ParameterError(SiteClustError, ValueError):
    pass


class DegenerateDataError(SiteClustError, ValueError):
    """Labels carry no contrast (all detections or all non-detections)."""


class OptimizationError(SiteClustError, RuntimeError):
    pass


class MetricUndefinedError(SiteClustError, ValueError):
    pass


class ConfigError(SiteClustError, ValueError):
    pass
