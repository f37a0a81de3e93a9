"""Exception types raised by the library."""


class NonDyadicLengthError(ValueError):
    """Signal length is not a power of two (or is too short)."""


class DivergenceError(ArithmeticError):
    """An integrated trajectory left the bounded region."""


class DegenerateScaleError(ValueError):
    """All coefficients at one scale are identical."""


class NumericalError(ArithmeticError):
    """A normalizer vanished or a fit produced non-finite values."""
