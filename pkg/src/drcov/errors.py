"""Exception hierarchy.

Every error carries a machine-readable ``reason`` (the class name) and the
process exit code the CLI maps it to: 2 for invalid input, 3 for numerical
failure.
"""


class DrcovError(Exception):
    exit_code = 2

    def __init__(self, message: str = "", **details):
        super().__init__(message)
        # extra machine-readable context, e.g. the offending row and column
        self.details = details

    @property
    def reason(self) -> str:
        return type(self).__name__


class ValidationError(DrcovError, ValueError):
    exit_code = 2


class NumericalError(DrcovError, ArithmeticError):
    exit_code = 3


class NonFinite(ValidationError):
    pass


class NotSymmetric(ValidationError):
    pass


class DimensionMismatch(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class RadiusTooLarge(ValidationError):
    pass


class RadiusNonPositive(ValidationError):
    pass


class SingularNominal(ValidationError):
    pass


class BadConfidence(ValidationError):
    pass


class BadAlpha(ValidationError):
    pass


class EmptyGrid(ValidationError):
    pass


class InsufficientData(ValidationError):
    pass


class InsufficientHistory(ValidationError):
    pass


class DegenerateClass(ValidationError):
    pass


class MalformedHeader(ValidationError):
    pass


class MalformedRow(ValidationError):
    pass


class ConfigError(ValidationError):
    pass


class UsageError(ValidationError):
    pass


class MissingInput(ValidationError):
    pass


class NoConvergence(NumericalError):
    pass


class BracketFailure(NumericalError):
    pass


class SingularEstimator(NumericalError):
    pass
