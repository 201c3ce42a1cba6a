"""Exception types shared across the package."""


class ShapeMismatchError(ValueError):
    """Two tensors that must be shape-congruent are not."""


class FormatError(ValueError):
    """A serialized buffer or compressed layer is malformed."""


class ConfigError(ValueError):
    """A schedule, training, or experiment configuration is invalid."""


class TrainingDivergedError(RuntimeError):
    """Training produced a non-finite loss."""
