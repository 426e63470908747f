"""Exception hierarchy shared by every module of the package."""


class SpinReadoutError(Exception):
    """Base class for all errors raised by spinreadout."""


class InvalidParameterError(SpinReadoutError, ValueError):
    """A parameter is non-finite, out of range or otherwise unusable."""


class AllSpinsDiscardedError(SpinReadoutError):
    """The dispersive discard rule removed every spin of an ensemble."""


class UndefinedSNRError(SpinReadoutError, ZeroDivisionError):
    """SNR requested at zero collection time (0/0)."""


class DivergentThresholdError(SpinReadoutError):
    """A run-count threshold diverges (zero collection time or no squeezing)."""


class UndefinedRatioError(SpinReadoutError, ZeroDivisionError):
    """A homogenised reference quantity vanished in a relative-error ratio."""


class BranchAmbiguityError(SpinReadoutError):
    """Spin-like and resonator-like eigenbranches cannot be told apart."""


class SizeError(SpinReadoutError, ValueError):
    """Requested Hilbert-space dimension exceeds the exact-calculus limit."""


class ConfigError(SpinReadoutError, ValueError):
    """A parameter file is malformed, has unknown keys or is missing keys."""
