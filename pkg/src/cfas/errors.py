"""Exception types raised across the package."""


class CfasError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(CfasError, ValueError):
    """A parameter is outside its admissible range."""


class ModelNotPSDError(CfasError):
    """The discretized correlation matrix has materially negative eigenvalues."""


class ResourceError(CfasError, MemoryError):
    """The requested grid exceeds the configured memory budget."""


class DegenerateSampleError(CfasError, ArithmeticError):
    """A realization produced a zero interference power (resample it)."""


class NoEventsError(CfasError):
    """An estimator has no events to divide by (e.g. zero downcrossings)."""
