"""Exception hierarchy shared by all modules.

Each class maps onto one of the CLI exit-code families (input, config,
numerical), see ``fundcurve.cli``.
"""


class FundCurveError(Exception):
    """Base class for all package errors."""


class DomainError(FundCurveError, ValueError):
    """Argument outside the admissible domain (price off the band, negative shift...)."""


class IncompatibleCurvesError(FundCurveError, ValueError):
    """Curves live on different grids or have different directions."""


class NoEquilibriumError(FundCurveError):
    """Supply and demand do not cross, or cross at zero volume."""


class ConfigError(FundCurveError, ValueError):
    pass


class ParseError(FundCurveError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataIntegrityError(FundCurveError, ValueError):
    pass


class GapError(DataIntegrityError):
    def __init__(self, message, timestamps=()):
        self.timestamps = list(timestamps)
        super().__init__(message)


class LookupFailure(FundCurveError, KeyError):
    """Requested timestamp (or other key) not present in the input."""

    def __str__(self):
        return str(self.args[0]) if self.args else ""


class DegenerateRegressorError(FundCurveError, ValueError):
    pass


class ObjectiveUndefinedError(FundCurveError):
    """Every hour failed to decompose, so the calibration loss has no value."""


class EmptyAggregateError(FundCurveError, ValueError):
    pass
