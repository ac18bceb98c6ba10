"""Exception hierarchy shared by every estimator and the harness."""


class MomKdeError(Exception):
    """Base class for all errors raised by :mod:`momkde`."""


class ParameterError(MomKdeError, ValueError):
    """An argument is outside its admissible range."""


class ShapeError(MomKdeError, ValueError):
    """Array dimensions do not agree."""


class NumericError(MomKdeError, ArithmeticError):
    """NaN, infinity or a violated numerical precondition (e.g. PSD)."""


class EmptyModelError(MomKdeError, ValueError):
    pass


class NormalizationError(NumericError):
    pass


class DegenerateFitError(MomKdeError, RuntimeError):
    pass


class SelectionError(MomKdeError, RuntimeError):
    pass


class MetricError(MomKdeError, ValueError):
    pass


class IngestionError(MomKdeError, ValueError):
    pass


class SchemaError(IngestionError):
    pass


class ProtocolError(MomKdeError, ValueError):
    pass


class ConfigError(MomKdeError, ValueError):
    pass
