"""Exception types shared across the package."""


class HypersamError(Exception):
    """Base class for all package errors."""


class ConfigError(HypersamError):
    """Invalid or unsatisfiable configuration."""


class UnknownAgent(HypersamError):
    """Agent id does not exist in the world."""


class DimensionMismatch(HypersamError):
    """Wrong number of actions or mismatched array shapes."""


class ShapeError(HypersamError):
    """Tensor shapes incompatible with the requested operation."""


class ZeroFeatures(HypersamError):
    """Feature normalization degenerated to zero."""


class NumericalError(HypersamError):
    """Non-finite values encountered where finite ones are required."""


class NoPath(HypersamError):
    """Grid planner could not reach the goal."""


class MissingCheckpoint(HypersamError):
    """A learned policy was requested without a parameter checkpoint."""


class CorruptTrace(HypersamError):
    """Trace file is truncated, unversioned, or inconsistent."""
