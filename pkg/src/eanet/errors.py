"""Exception hierarchy shared across the package.

Every failure raised on purpose derives from EanetError so callers (and the
CLI) can separate expected problems from genuine bugs.
"""


class EanetError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(EanetError):
    """Tensor shapes are incompatible for the requested operation."""


class ContractError(EanetError):
    """A documented precondition was violated by the caller."""


class ParseError(EanetError):
    """A text input (scene file, config, CSV report) could not be parsed."""


class DataError(EanetError):
    """Input data is structurally valid but semantically inconsistent."""


class ConfigError(EanetError):
    """A configuration value is out of its documented range."""


class CheckpointError(EanetError):
    """A checkpoint file is missing, corrupt, or incompatible."""


class TrainingDiverged(EanetError):
    """Offline training hit a non-finite loss and was aborted."""

    def __init__(self, message, epoch=None, step=None):
        super().__init__(message)
        self.epoch = epoch
        self.step = step
