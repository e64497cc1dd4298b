"""Exception hierarchy shared by every module."""


class STFusionError(Exception):
    """Base class for all package errors."""


class FormatError(STFusionError):
    """A file or header does not follow the expected layout."""


class DataError(STFusionError, ValueError):
    """Input data is well-formed but its values are unusable."""


class ConfigError(STFusionError, ValueError):
    """A configuration value or key is invalid."""


class ShapeError(STFusionError, ValueError):
    """Tensor or sequence shapes are incompatible."""


class UsageError(STFusionError, RuntimeError):
    """An API was called in an invalid state."""


class TrainError(STFusionError, RuntimeError):
    """Training diverged."""
