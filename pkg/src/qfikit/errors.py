"""Exception types shared across the package."""


class QfikitError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(QfikitError, ValueError):
    """A subsystem or operator dimension is invalid."""


class LayoutMismatchError(QfikitError, ValueError):
    """Two objects live on incompatible space layouts."""


class NonHermitianError(QfikitError, ValueError):
    """An operator required to be Hermitian is not."""


class TruncationLeakError(QfikitError, RuntimeError):
    """State amplitude leaked past the Fock truncation boundary."""


class StepSizeError(QfikitError, RuntimeError):
    """A finite-difference step produced an untrustworthy derivative.

    Raised when Richardson extrapolation disagrees with the plain estimate,
    or when a differentiated propagator is visibly non-unitary-consistent.
    The fix is almost always a different ``delta``.
    """


class InsensitiveOperatingPointError(QfikitError, RuntimeError):
    """The fringe slope vanished at the requested operating point."""


class UnsupportedStateError(QfikitError, ValueError):
    """The state does not satisfy a method precondition (e.g. purity)."""


class ConfigError(QfikitError, ValueError):
    """An experiment configuration is malformed or inconsistent."""


class BoundaryWarning(UserWarning):
    """A scan maximum sits on the edge of the scanned range."""
