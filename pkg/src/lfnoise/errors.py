"""Exception types shared across the package."""


class LfnoiseError(Exception):
    """Base class for all package-specific errors."""


class ParseError(LfnoiseError):
    """Malformed or unrecognized input document."""


class DegenerateSignal(LfnoiseError):
    """Signal with a single atom or zero variance."""


class NegativeEpsilon(LfnoiseError):
    """Noise budget must be non-negative."""


class BadGrid(LfnoiseError):
    """Budget grid is empty or not strictly increasing."""


class UnknownBattery(LfnoiseError):
    """Unrecognized verification battery name."""


class QuadratureBudgetExceeded(LfnoiseError):
    """Tail tolerance needs more quadrature nodes than allowed."""


class NonPositiveSigma(LfnoiseError):
    """Gaussian smoothing width must be strictly positive."""


class InfeasibleSupport(LfnoiseError):
    """No weight vector on the support satisfies the moment constraints."""


class DegenerateClass(LfnoiseError):
    """A conditioning class carries zero probability."""


class InvalidSampleCount(LfnoiseError):
    """Monte Carlo sample count below the supported minimum."""


class InternalConsistencyError(LfnoiseError):
    """A posterior representation violated an exact identity."""
