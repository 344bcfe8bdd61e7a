"""Exception hierarchy shared by every module."""


class IsingMFError(Exception):
    """Base class for all package errors."""


class ValidationError(IsingMFError, ValueError):
    """A model violates one of its structural invariants."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class AsymmetricCoupling(ValidationError):
    pass


class NonzeroDiagonal(ValidationError):
    pass


class NonFiniteEntry(ValidationError):
    pass


class BadSubsetKey(ValidationError):
    pass


class DimensionMismatch(IsingMFError, ValueError):
    pass


class TooLargeForExact(IsingMFError):
    pass


class InvalidParams(IsingMFError, ValueError):
    pass


class ModelFormatError(IsingMFError, ValueError):
    pass


class BoundaryMarginal(IsingMFError, ValueError):
    pass


class NotInDobrushinRegime(IsingMFError, ValueError):
    pass


class BadEpsilon(IsingMFError, ValueError):
    pass


class BadGamma(IsingMFError, ValueError):
    pass


class GridBudgetExceeded(IsingMFError):
    pass


class NotFerromagnetic(IsingMFError, ValueError):
    pass


class NonUniformField(IsingMFError, ValueError):
    pass


class AllIsolated(IsingMFError, ValueError):
    pass


class ZeroModel(IsingMFError, ValueError):
    pass
