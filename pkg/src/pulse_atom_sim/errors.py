"""Exception hierarchy shared across the package.

The CLI maps these onto stable exit codes: configuration problems -> 2,
numerical failures -> 3, file/I-O problems -> 4.
"""


class PulseAtomSimError(Exception):
    """Base class for all package errors."""


class DomainError(PulseAtomSimError, ValueError):
    """A physical parameter is outside its valid domain."""


class UnsupportedParameterError(DomainError):
    """Parameter combination outside the implemented range."""


class GridError(PulseAtomSimError, ValueError):
    """Time grid is empty, non-monotonic, or does not cover the pulse."""


class NumericalError(PulseAtomSimError, RuntimeError):
    """Integrator step control or an iterative fit failed to converge."""


class NoInteriorMaximumError(NumericalError):
    """Coarse scan found no interior maximum inside the requested bracket."""


class BinProbabilityError(PulseAtomSimError, ValueError):
    """Per-bin detection probability too large for Bernoulli sampling."""


class TimestampFormatError(PulseAtomSimError, ValueError):
    """Timestamp file is malformed, truncated, or has the wrong version."""


class ConfigError(PulseAtomSimError, ValueError):
    """Configuration file or flag set is invalid."""
