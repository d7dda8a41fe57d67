"""Exception hierarchy shared by every module in the package."""


class TiltCRMError(Exception):
    """Base class for all package errors."""


class ValidationError(TiltCRMError, ValueError):
    """A process specification or configuration violates a model constraint."""


class DomainError(TiltCRMError, ValueError):
    """A function was evaluated outside its mathematical domain."""


class UsageError(TiltCRMError, ValueError):
    """An API was called with structurally invalid arguments."""


class NumericError(TiltCRMError, ArithmeticError):
    """A numerical routine failed to converge or produced NaN.

    Attributes
    ----------
    partial : float or ndarray or None
        Best estimate available when the routine gave up.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial
