"""Exception types shared across the package."""


class PlateSrError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(PlateSrError, ValueError):
    """A configuration object violates one of its invariants."""


class ShapeError(PlateSrError, ValueError):
    """An array argument has the wrong shape or dtype family."""


class DataError(PlateSrError, ValueError):
    """A dataset record or label is malformed."""


class CheckpointError(PlateSrError, RuntimeError):
    """A checkpoint file is missing, corrupt, or mismatched."""


class OcrError(PlateSrError, RuntimeError):
    """An OCR adapter failed while recognizing an image."""


class DegradationError(PlateSrError, RuntimeError):
    """The degradation loop could not land inside the target interval.

    Carries the best SSIM achieved so the caller can report how close
    the loop got before giving up.
    """

    def __init__(self, message: str, best_ssim: float):
        super().__init__(message)
        self.best_ssim = float(best_ssim)


class NonFiniteLossError(PlateSrError, RuntimeError):
    """Training produced a NaN or infinite loss value."""
