"""Exception types shared across the package."""


class MaskSupError(Exception):
    """Base class for all package errors."""


class ShapeMismatch(MaskSupError):
    """Spatial dimensions of two arrays that must agree do not."""


class CoverageUnreachable(MaskSupError):
    """Mask resampling exhausted without landing in the coverage band."""


class LabelOutOfRange(MaskSupError):
    """A label map contains a value outside {0..K-1} plus the ignore label."""


class MissingPair(MaskSupError):
    """An image without a matching mask (or vice versa) in a dataset directory."""


class EmptyDataset(MaskSupError):
    """A dataset directory produced no usable samples."""


class EmptyEvaluation(MaskSupError):
    """A confusion matrix with no class having a nonzero union."""


class ChecksumMismatch(MaskSupError):
    """A checkpoint file is corrupted or truncated."""


class NonFiniteLoss(MaskSupError):
    """Training produced a NaN/Inf loss; carries the offending step."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")


class ConfigError(MaskSupError):
    """Invalid training configuration or config file."""
