"""Exception types raised by the package."""


class HolderDescentError(Exception):
    """Base class for all package errors."""


class ConfigurationError(HolderDescentError, ValueError):
    """A stepsize policy or experiment configuration cannot be resolved."""


class RangeError(HolderDescentError, ArithmeticError):
    """A closed-form quantity overflowed, underflowed or left its valid range."""


class NumericError(HolderDescentError, FloatingPointError):
    """A gradient or iterate became non-finite."""


class AccuracyError(HolderDescentError, RuntimeError):
    """The reference ODE integration failed its refinement self-check."""

    def __init__(self, message, coarse=None, fine=None):
        super().__init__(message)
        self.coarse = coarse
        self.fine = fine


class PreconditionError(HolderDescentError, ValueError):
    """An operation was called outside its admissible parameter range."""
