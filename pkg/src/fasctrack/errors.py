"""Exception hierarchy shared across the package."""


class FasctrackError(Exception):
    """Base class for all errors raised by this package."""


class IoError(FasctrackError):
    """A file or directory is missing, unreadable, or unwritable."""


class FormatError(FasctrackError):
    """A file exists but cannot be decoded as the expected format."""


class InconsistentDimensions(FasctrackError):
    """Frames in a sequence do not share one width/height."""


class DegenerateFit(FasctrackError):
    """Too few points, or no x-spread, for a least-squares line."""


class ModelLoadError(FasctrackError):
    """A model artifact could not be loaded or fails its I/O contract."""


class InferenceError(FasctrackError):
    """Shape mismatch or unsupported operation during inference."""


class InsufficientAponeuroses(FasctrackError):
    """Fewer than two aponeurosis candidates survived thresholding."""


class DimensionMismatch(FasctrackError):
    """Two masks being compared have different dimensions."""


class InsufficientData(FasctrackError):
    """Not enough value pairs for the requested statistic."""


class DegenerateAnova(FasctrackError):
    """The ICC denominator is zero (no variance in the matrix)."""


class LengthMismatch(FasctrackError):
    """Two series being exported do not align in length."""


class ConfigError(FasctrackError):
    """Invalid or missing configuration value; message names the key."""
