"""Exception hierarchy shared by the library and the command line.

Each class carries the exit status the CLI reports for it.
"""


class MZError(Exception):
    exit_code = 1


class ValidationError(MZError, ValueError):
    """Parameters or configuration outside their documented range."""

    exit_code = 3


class SummabilityError(ValidationError):
    """The weights are not p-summable, so the norming sequence is infinite."""


class UnavailableError(ValidationError):
    """The requested quantity has no analytic form for this model."""


class NumericalPrecisionError(MZError, ArithmeticError):
    """Quadrature or series evaluation missed its stated tolerance."""

    exit_code = 4


class ResourceError(MZError, RuntimeError):
    """A certified truncation would need an infeasibly large index window."""

    exit_code = 5

    def __init__(self, message, needed=None):
        super().__init__(message)
        self.needed = needed
