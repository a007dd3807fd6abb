"""Exception and warning types shared across the engine.

The CLI maps these onto exit codes: data/container problems -> 2,
numeric/degenerate conditions -> 3 (see cli.py).
"""


class DimensionError(ValueError):
    """Operand shapes or lengths do not agree."""


class NonFiniteError(ValueError):
    """NaN or Inf encountered where finite values are required."""


class DegenerateGradientError(ValueError):
    """An operation required a nonzero gradient and got a zero vector."""


class DegenerateGradientWarning(UserWarning):
    """Zero gradient: a deterministic fallback was used instead of failing."""


class DegenerateDistributionWarning(UserWarning):
    """Calibration scores are all identical; strict thresholding is void."""


class InsufficientCalibrationError(ValueError):
    """Too few calibration scores for a meaningful threshold."""


class UndefinedRatioError(ValueError):
    """Top-k mass ratio requested on an all-zero vector."""


class GenerationError(RuntimeError):
    """Synthetic-data construction invariant unattainable within retry budget."""


class DataFormatError(ValueError):
    """Base class for container-format violations."""


class MissingBlobError(DataFormatError):
    """A file referenced by the manifest does not exist."""


class BlobLengthError(DataFormatError):
    """Blob byte length disagrees with the manifest's count and dims."""


class DimMismatchError(DataFormatError):
    """Dimensions in the manifest are mutually inconsistent."""


class UnknownActivationError(DataFormatError):
    """Manifest names an activation the engine does not support."""


class VersionMismatchError(DataFormatError):
    """Unsupported container format version."""
