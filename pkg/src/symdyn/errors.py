"""Exception types shared across the package."""


class SymdynError(Exception):
    """Base class for all package errors."""


class ShapeError(SymdynError, ValueError):
    """Operand shapes do not conform."""


class NonFiniteError(SymdynError, FloatingPointError):
    """A NaN or Inf appeared where only finite values are allowed."""


class GraphConsumedError(SymdynError, RuntimeError):
    """backward() was called twice on the same recorded graph."""


class ConfigError(SymdynError, ValueError):
    """A run configuration failed validation."""


class GenerationError(SymdynError, RuntimeError):
    """A data generator hit an unstable or physically invalid regime."""


class TrainingDiverged(SymdynError, RuntimeError):
    """A training loss exceeded the divergence threshold."""
