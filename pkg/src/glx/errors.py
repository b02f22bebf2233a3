"""Exception hierarchy shared by all glx modules."""


class GlxError(Exception):
    """Base class for every error raised by glx."""


class SizeError(GlxError):
    """Requested lattice or matrix is too large to index or store."""


class ParameterError(GlxError, ValueError):
    """Model or method parameters outside their supported range."""


class SPDError(ParameterError):
    """A matrix that must be symmetric positive definite is not."""


class ConditioningError(GlxError):
    """Gaussian conditioning on a singular block."""


class ConsistencyError(GlxError):
    """Two independent computations of the same quantity disagree."""


class RangeError(GlxError):
    """Quadrature cannot meet its tolerance at the requested argument."""


class TruncationError(GlxError):
    """A truncated series could not certify its tail within the step cap."""


class CertificateError(GlxError):
    """An asymptotic certificate was inconclusive at the chosen radius."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class PartitionError(GlxError, ValueError):
    """Invalid partition of an index set."""


class ConfigError(GlxError, ValueError):
    """Invalid run configuration."""
