"""Exception hierarchy shared across the package."""


class MvppError(Exception):
    """Base class for all package errors."""


class TenabilityViolation(MvppError):
    """An update would drive an atom of a nonnegative measure below -1e-12."""


class EmptyMeasure(MvppError):
    """Operation requires positive total mass."""


class NotNormalized(MvppError):
    """Operation requires probability measures (mass 1 within 1e-6)."""


class DimensionUnsupported(MvppError):
    """Metric not implemented for this dimension."""


class MeanUnavailable(MvppError):
    """An exact mean kernel was requested but the kernel has none."""


class InvalidMatrix(MvppError):
    """Matrix fails the structural preconditions (sign, row sums, shape)."""


class InvalidParams(MvppError):
    """Model or config parameters out of range."""


class UnknownModel(MvppError):
    """Model name not present in the zoo registry."""


class UnknownReference(MvppError):
    """Reference-distribution key not recognized."""


class NoConvergence(MvppError):
    """Iterative solver hit max_iter before reaching tolerance."""


class HorizonCapExceeded(MvppError):
    """A sample path exceeded the hard length cap (mis-specified chain)."""


class EmptyTrace(MvppError):
    """Diagnostic requires a nonempty trace."""


class ParseError(MvppError):
    """Config document malformed or missing required fields."""


class InternalCheckFailed(MvppError):
    """A paranoid-mode consistency recomputation disagreed with the state."""
