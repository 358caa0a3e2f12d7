"""Exception hierarchy shared across the package."""


class FracBurgersError(Exception):
    """Base class for all package errors."""


class RejectedInputError(FracBurgersError, ValueError):
    """Input samples or coefficients are not acceptable (non-finite, wrong shape)."""


class NonFiniteError(FracBurgersError, FloatingPointError):
    """A computation produced NaN or Inf.

    ``t`` carries the simulation time at which it happened, when known.
    """

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class ConvexityError(FracBurgersError, ValueError):
    def __init__(self, message, y=None):
        super().__init__(message)
        self.y = y


class GrowthError(FracBurgersError, ValueError):
    def __init__(self, message, h1_fit=None):
        super().__init__(message)
        self.h1_fit = h1_fit


class ResolutionError(FracBurgersError, ValueError):
    """The grid does not resolve the dissipation length and no override was given."""


class DegenerateInitialData(FracBurgersError, ValueError):
    pass


class LatticeShiftError(FracBurgersError, ValueError):
    pass


class DegenerateFlatness(FracBurgersError, ZeroDivisionError):
    pass


class WindowNotCovered(FracBurgersError, ValueError):
    pass


class UnsupportedTarget(FracBurgersError, KeyError):
    pass


class LogDomainError(FracBurgersError, ValueError):
    pass


class ConfigError(FracBurgersError, ValueError):
    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class SnapshotError(FracBurgersError, IOError):
    pass


class OutputError(FracBurgersError, OSError):
    """Output directory could not be written."""
