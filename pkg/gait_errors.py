class GaitError(Exception):
    """GaitError class

    Base class for all errors raised by the gait encoding library.
    """


class ConfigError(GaitError):
    """Invalid argument or configuration combination."""


class DatasetFormatError(GaitError):
    """Malformed manifest or recording file."""


class InsufficientFramesError(GaitError):
    """Recording too short for the requested sequence length."""


class ShapeError(GaitError):
    """Shape or width mismatch between inputs."""


class NumericalError(GaitError):
    """NaN or Inf encountered in a computation."""


class CheckpointError(GaitError):
    """Unreadable or incompatible checkpoint."""
