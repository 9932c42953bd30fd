"""Exception types shared across the pipeline."""


class SnorelabError(Exception):
    """Base class for all snorelab errors."""


class AudioDecodeError(SnorelabError):
    """WAV data is malformed, truncated, or uses an unsupported encoding."""


class EmptyAudioError(SnorelabError):
    """Decoded audio contains no samples."""


class ValidationError(SnorelabError):
    """Input data violates a documented precondition."""


class InsufficientDataError(SnorelabError):
    """Not enough data to run the requested computation."""


class UnderpopulatedClassError(SnorelabError):
    """A class has too few samples to fit the classifier."""


class DegenerateDataError(SnorelabError):
    """Covariance could not be made positive definite within the ridge cap."""


class LeakageError(SnorelabError):
    """Held-out windows were found inside a training or inner-fold set."""


class ModelFormatError(SnorelabError):
    """Persisted model document is malformed or has an incompatible schema."""
