"""Exception hierarchy shared by all marrowcyto modules."""


class MarrowCytoError(Exception):
    """Base class for all errors raised by this package."""


# --- slide I/O ---

class SlideNotFoundError(MarrowCytoError):
    pass


class UnsupportedFormatError(MarrowCytoError):
    pass


class CorruptHeaderError(MarrowCytoError):
    pass


class InvalidGeometryError(MarrowCytoError):
    pass


class OutOfGridError(MarrowCytoError):
    pass


class ReadFailureError(MarrowCytoError):
    pass


# --- inference backends ---

class BackendUnavailableError(MarrowCytoError):
    pass


class InferenceFailureError(MarrowCytoError):
    pass


class UnknownClassIdError(MarrowCytoError):
    pass


# --- statistics / histograms ---

class EmptyInputError(MarrowCytoError):
    pass


class DimensionMismatchError(MarrowCytoError):
    pass


class EmptyHistogramError(MarrowCytoError):
    pass


class AlreadyConvergedError(MarrowCytoError):
    """Accumulating into a converged histogram without forcing it."""


# --- evaluation ---

class EmptyConfusionError(MarrowCytoError):
    pass


class SingleClassInputError(MarrowCytoError):
    pass


class NoGroundTruthError(MarrowCytoError):
    pass


# --- dataset / annotations ---

class AnnotationParseError(MarrowCytoError):
    def __init__(self, message, location=None):
        super().__init__(message if location is None else f"{location}: {message}")
        self.location = location


class UnknownClassNameError(MarrowCytoError):
    pass


class InsufficientDataError(MarrowCytoError):
    pass


class DegenerateCropError(MarrowCytoError):
    """Crop removed every box; the caller decides whether to retry."""


class InfeasibleTargetError(MarrowCytoError):
    pass


class EmptyPoolError(MarrowCytoError):
    pass


class UnknownTileRefError(MarrowCytoError):
    pass


class ConflictingDuplicateError(MarrowCytoError):
    pass


# --- pipeline ---

class PartialRunError(MarrowCytoError):
    """Per-tile failure count exceeded the configured tolerance."""

    def __init__(self, message, failures=()):
        super().__init__(message)
        self.failures = list(failures)


class InsufficientDataWarning(UserWarning):
    """A stratum is too small for the requested split to be meaningful."""
