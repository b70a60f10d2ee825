"""Exception hierarchy and process exit codes."""


class DomainFusionError(Exception):
    """Base class for all package errors."""


class ShapeError(DomainFusionError):
    """Tensor or parameter shapes violate an operation contract."""


class LabelError(DomainFusionError):
    """A class label is outside the valid range."""


class ConfigError(DomainFusionError):
    """Bad, missing, or unknown configuration keys or CLI arguments."""


class DataFormatError(DomainFusionError):
    """Base class for on-disk format violations."""


class BadMagicError(DataFormatError):
    """File does not start with the expected magic bytes."""


class TruncatedFileError(DataFormatError):
    """File ends before the declared payload."""


class LabelRangeError(DataFormatError):
    """Stored label is >= the declared class count."""


class DimensionError(DataFormatError):
    """Declared dimensions are zero, inconsistent, or overflow."""


class InsufficientClassError(DomainFusionError):
    """A class has fewer members than a subsample request needs."""


class DivergenceError(DomainFusionError):
    """Training produced a non-finite loss."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class DegenerateWeightError(DomainFusionError):
    """Spectral normalization hit an effectively zero weight matrix."""


class EigenSolverError(DomainFusionError):
    """Jacobi eigensolver failed to converge or produced an invalid spectrum."""


class StarvationError(DomainFusionError):
    """Rejection sampling exceeded its attempt budget."""

    def __init__(self, message: str, class_id: int, attempts: int, rate: float):
        super().__init__(message)
        self.class_id = class_id
        self.attempts = attempts
        self.rate = rate


# Stable CLI exit codes.
EXIT_OK = 0
EXIT_IO = 2
EXIT_CONFIG = 3
EXIT_DIVERGENCE = 4
EXIT_STARVATION = 5
