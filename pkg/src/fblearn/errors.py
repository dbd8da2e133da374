"""Exception hierarchy shared by all fblearn modules."""


class FBLearnError(Exception):
    """Base class for every error raised by this package."""


class InvalidArgument(FBLearnError, ValueError):
    pass


class DegenerateFilterError(FBLearnError, ValueError):
    """A triangular filter covers no FFT bin (too many filters for nfft)."""


class FrozenLayerError(FBLearnError, RuntimeError):
    pass


class TrainingDiverged(FBLearnError, RuntimeError):
    def __init__(self, epoch, message=None):
        self.epoch = epoch
        super().__init__(message or f"loss became non-finite in epoch {epoch}")


class WavParseError(FBLearnError, ValueError):
    def __init__(self, message, offset):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class UnsupportedFormat(FBLearnError, ValueError):
    pass


class ManifestError(FBLearnError, ValueError):
    pass


class ConfigError(FBLearnError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
