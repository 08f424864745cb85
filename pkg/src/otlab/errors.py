"""Exception hierarchy shared by all otlab modules.

Errors fall in two families: ``ValidationError`` subclasses (bad input,
bad configuration, missing artifacts) and ``NumericalError`` subclasses
(a computation that could not deliver its postcondition). The command
line maps the first family to exit status 2 and the second to 3.
"""


class LabError(Exception):
    """Base class for every error raised by otlab."""


class ValidationError(LabError):
    pass


class NumericalError(LabError):
    pass


class DomainError(ValidationError):
    """A point lies outside the box on which a cost is defined."""


class InvalidSpecError(ValidationError):
    pass


class InvalidParameterError(ValidationError):
    pass


class TooLargeError(ValidationError):
    pass


class NotApplicableError(ValidationError):
    pass


class InvalidSectionError(ValidationError):
    """The requested target is not in the c-subdifferential at the center."""


class MissingArtifactError(ValidationError):
    pass


class NothingToReportError(ValidationError):
    pass


class SingularityError(NumericalError):
    """Cost derivatives are undefined at the requested pair (e.g. x == y, p < 2)."""


class NoSolutionError(NumericalError):
    pass


class DegenerateCostError(NumericalError):
    pass


class IterationLimitError(NumericalError):
    def __init__(self, message, last_gap=None):
        super().__init__(message)
        self.last_gap = last_gap


class NondifferentiableError(NumericalError):
    """One-sided slopes disagree: the point is a candidate singular point."""

    def __init__(self, message, point=None, gap=None):
        super().__init__(message)
        self.point = point
        self.gap = gap


class DegenerateError(NumericalError):
    """Input does not span full dimension (hull, ellipsoid, envelope)."""

    def __init__(self, message, hull=None):
        super().__init__(message)
        self.hull = hull


class InsufficientResolutionError(NumericalError):
    pass
