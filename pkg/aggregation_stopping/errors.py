class AggregationStoppingError(Exception):
    """Base class for the exceptions raised by this package."""


class DomainError(AggregationStoppingError, ValueError):
    """Raised when an argument lies outside the domain of the requested
    function, e.g. a barrier above the starting state or a non-positive Bessel
    argument.
    """


class NumericError(AggregationStoppingError, ArithmeticError):
    """Raised when a numerical procedure fails. *detail* is a ``dict`` that
    describes the failure (solver message, residual, offending rate).
    """

    def __init__(self, message, **detail):
        super().__init__(message)
        self.detail = detail


class PreconditionError(AggregationStoppingError):
    """Raised by :func:`aggregation_stopping.equilibrium.smallest_threshold_smooth`
    when the model or attitude conditions fail and no override was given.
    *report* holds the failing checks.
    """

    def __init__(self, message, report):
        super().__init__(message)
        self.report = report


class UnsupportedError(AggregationStoppingError):
    """Raised when a fast path is asked to handle a model, payoff or rate that
    is outside its scope.
    """


class ConventionError(AggregationStoppingError):
    """Raised when a raw zero discount rate is used without opting into the
    transform-limit convention.
    """


class ConfigError(AggregationStoppingError):
    """Raised for invalid experiment configuration. *field* names the offending
    key; *line* is the document line when the parser reports one.
    """

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line

    def __str__(self):
        parts = [super().__str__()]
        if self.field:
            parts.append(f'field: {self.field}')
        if self.line:
            parts.append(f'line: {self.line}')
        return '; '.join(parts)
