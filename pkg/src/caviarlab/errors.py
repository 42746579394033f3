"""Exception types shared across the package."""


class CaviarError(Exception):
    """Base class for all caviarlab errors."""


class PathError(CaviarError):
    """A conditional-quantile recursion could not be evaluated."""


class NonFinitePathError(PathError):
    """The recursion overflowed (|f_t| beyond the finite-path threshold)."""


class NegativeRadicandError(PathError):
    """Indirect GARCH radicand went negative along the path."""


class ZeroQuantileError(PathError):
    """Indirect GARCH gradient undefined where the fitted quantile is zero."""


class SingularMatrixError(CaviarError):
    """Matrix numerically singular under the pivot threshold."""


class AllTrialsInvalidError(CaviarError):
    """Every multistart trial produced an infinite objective."""


class BandwidthDomainError(CaviarError):
    """Kernel bandwidth rule left the open unit interval."""


class DegenerateGradientError(CaviarError):
    """Gradient quadratic form vanished at a nonzero residual."""


class ExplosionError(CaviarError):
    """A simulated path exceeded the explosion threshold."""


class UnsupportedFamilyError(CaviarError):
    """Operation not defined for this model family."""


class UnsupportedFormError(CaviarError):
    """Stability conditions only cover linear-in-observables recursions."""
