import logging


class ErrorException(Exception):
    """
    Base class for other exceptions
    """

    def __init__(self, message):
        super().__init__(message)
        self.message = message
        logging.getLogger(__name__).error(message)


class ValidationError(ErrorException):
    """
    Raised when inputs, configuration or intermediate artifacts fail validation
    """

    pass


class ConfigError(ValidationError):
    pass


class SchemaError(ValidationError):
    """
    Raised when an input table or a saved artifact does not have the expected layout
    """

    pass


class RecordError(ValidationError):
    """
    Raised when one or more input rows cannot be parsed

    Attributes:
        row_errors (list[tuple[int, str]]): (row number in the file, reason) pairs.
    """

    def __init__(self, row_errors):
        self.row_errors = list(row_errors)
        lines = "; ".join(f"row {row}: {reason}" for row, reason in self.row_errors)
        super().__init__(f"{len(self.row_errors)} malformed row(s): {lines}")


class LineConflictError(ValidationError):
    pass


class YearRangeError(ValidationError):
    pass


class DegenerateEdgeError(ValidationError):
    pass


class UnknownLineError(ValidationError):
    pass


class DegenerateScaleError(ValidationError):
    pass


class KernelError(ValidationError):
    pass


class SingularKernelError(KernelError):
    pass


class EmptyFitError(ValidationError):
    pass


class DomainError(ValidationError):
    """
    Raised when a model quantity is evaluated outside its support
    """

    pass


class RankDeficiencyError(ValidationError):
    pass


class DiagnosticError(ValidationError):
    """
    Raised when a convergence diagnostic is undefined for the given draws
    """

    pass


class OptimizerConvergenceError(ErrorException):
    """
    Raised when the variance-components optimizer stops before converging

    Attributes:
        best (EmpiricalFit): the best fit found before giving up.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class SamplingError(ErrorException):
    def __init__(self, message, iteration=None, chain=None):
        super().__init__(message)
        self.iteration = iteration
        self.chain = chain


class ConvergenceGateError(ErrorException):
    """
    Raised by the CLI when the convergence report fails its thresholds
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
