"""Exception hierarchy.

CLI exit codes map onto these: configuration problems exit with 2, numerical
failures with 3.
"""


class UllersmaError(Exception):
    """Base class for all library errors."""


class ConfigurationError(UllersmaError):
    """Invalid configuration or parameter set."""

    def __init__(self, message, key=None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key


class ValidationError(ConfigurationError):
    """A model invariant (monotone frequencies, positivity, ...) is violated."""


class NumericalError(UllersmaError):
    """A numerical procedure failed or lost accuracy."""


class PoleProximityError(NumericalError):
    def __init__(self, message, pole):
        super().__init__(message)
        self.pole = pole


class DielectricPoleError(PoleProximityError):
    pass


class PoleBandError(NumericalError):
    def __init__(self, message, sites):
        super().__init__(message)
        self.sites = list(sites)


class BracketingError(NumericalError):
    def __init__(self, message, interval):
        super().__init__(message)
        self.interval = interval


class AccuracyError(NumericalError):
    def __init__(self, message, estimate=None):
        super().__init__(message)
        self.estimate = estimate


class DomainError(NumericalError):
    pass


class BranchCrossingError(NumericalError):
    def __init__(self, message, location):
        super().__init__(message)
        self.location = location


class SpectralCountError(NumericalError):
    def __init__(self, message, tallies=None):
        super().__init__(message)
        self.tallies = tallies


class CrossValidationError(NumericalError):
    def __init__(self, message, unmatched=()):
        super().__init__(message)
        self.unmatched = list(unmatched)


class ResonanceError(NumericalError):
    def __init__(self, message, nearest):
        super().__init__(message)
        self.nearest = nearest


class ProjectionError(NumericalError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class CompletenessError(NumericalError):
    pass


class ContinuationRangeError(NumericalError):
    pass


class ComparisonWindowError(NumericalError):
    pass
