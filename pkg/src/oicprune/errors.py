"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class ConfigError(ValueError):
    """Invalid configuration value, unknown key, or incompatible option."""


class SurgeryError(RuntimeError):
    """A pruning plan no longer matches the model it is applied to."""


class TrainingDiverged(RuntimeError):
    """Loss became non-finite during training."""


class CheckpointError(ValueError):
    """Checkpoint file is corrupt, truncated, or has a bad version."""


class IdxFormatError(ValueError):
    """Base class for IDX file parsing failures."""


class IdxBadMagic(IdxFormatError):
    """Magic number does not match the expected IDX record type."""


class IdxTruncated(IdxFormatError):
    """File ended before the declared payload was read."""


class IdxCountMismatch(IdxFormatError):
    """Image file and label file declare different item counts."""
