"""Exception types shared across the pipeline."""


class InputError(ValueError):
    """An input violates a documented precondition (geometry mismatch, bad range, misaligned lists)."""


class ConfigError(ValueError):
    """A config file or flag combination is invalid."""


class MissingPrerequisiteError(FileNotFoundError):
    """A required artifact (checkpoint, manifest, image file) is absent."""


class NumericFailureError(RuntimeError):
    """A non-finite value appeared during training or inference.

    Carries the step index (or -1 for inference) so failures can be located
    in long runs.
    """

    def __init__(self, message: str, step: int = -1):
        super().__init__(message)
        self.step = step


class UndefinedMetricError(ValueError):
    """A metric was requested on inputs where it is undefined (e.g. single-class AUC)."""
