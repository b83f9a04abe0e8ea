"""Exception types shared across the toolkit.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataConsistencyError -> 3, CapacityError -> 4.
"""


class NpyFormatError(ValueError):
    """Malformed NPY container. Carries the byte offset of the defect."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedDtypeError(NpyFormatError):
    """Dtype descriptor outside the supported set (f32/f64/i32/i64/bool)."""


class LayoutError(ValueError):
    """Latent layout inconsistent with its declared flat length."""


class DataError(ValueError):
    """Non-finite or otherwise unusable numeric input."""


class RankDeficiencyError(ValueError):
    """Normal equations singular; the usual fix is a penalty lambda > 0."""


class CapacityError(RuntimeError):
    """Requested materialization exceeds the configured memory budget."""


class DegenerateInputError(ValueError):
    """Input carries no usable signal (zero norm or zero variance)."""


class UndefinedCorrelationError(DegenerateInputError):
    """Pearson correlation undefined because an argument is constant."""


class ConfigError(ValueError):
    """Invalid configuration or command usage."""


class DataConsistencyError(ValueError):
    """Mismatched counts or shapes across pipeline inputs."""
