"""Exception types raised across the package."""


class MixedBOError(Exception):
    """Base class for all package errors."""


class OutOfDomain(MixedBOError, ValueError):
    """A design-point coordinate lies outside its parameter's domain."""

    def __init__(self, index, value, message=None):
        self.index = index
        self.value = value
        super().__init__(message or f"coordinate {index} has out-of-domain value {value!r}")


class LayoutMismatch(MixedBOError, ValueError):
    pass


class DimensionMismatch(MixedBOError, ValueError):
    pass


class CholeskyFailure(MixedBOError, ArithmeticError):
    pass


class FitFailure(MixedBOError, RuntimeError):
    pass


class ZeroProbability(MixedBOError, ValueError):
    pass


class SpaceTooLarge(MixedBOError, ValueError):
    pass


class KernelIncompatible(MixedBOError, TypeError):
    """The surrogate needs discrete inputs but received relaxed ones."""


class NonFiniteGradient(MixedBOError, FloatingPointError):
    pass


class EmptyHistory(MixedBOError, ValueError):
    pass
