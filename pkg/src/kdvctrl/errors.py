"""Exception types shared across the package.

Exit-code mapping used by the CLI: configuration problems map to 2,
numerical blow-up to 3, failed verification checks to 1.
"""


class KdvError(Exception):
    """Base class for all package errors."""


class ConfigurationError(KdvError):
    """Invalid scenario or grid configuration (bad sizes, modes, profiles)."""


class UsageError(KdvError):
    """API misuse: kind mismatch, inconsistent vector lengths, wrong mode."""


class SolverError(KdvError):
    """Linear-system assembly or factorization failed.

    Carries conditioning diagnostics in ``details`` when available.
    """

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = dict(details or {})


class ConvergenceError(KdvError):
    """Solve finished but residuals stayed above the acceptance tolerance."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ResolutionError(KdvError):
    """Grid too coarse for the requested finite-difference stencil."""


class BlowUpError(KdvError):
    """NaN/Inf appeared during time stepping or fixed-point iteration."""

    def __init__(self, message, iterate=None, step=None, time=None):
        super().__init__(message)
        self.iterate = iterate
        self.step = step
        self.time = time


class DomainError(KdvError):
    """Input outside the mathematical domain of an operation."""


class CacheMiss(KdvError):
    """No cache entry for the requested kernel key; caller should re-solve."""


class CacheFormatError(KdvError):
    """Cache file exists but is corrupt or truncated."""
