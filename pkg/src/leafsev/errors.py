class LeafsevError(Exception):
    pass


class DecodeError(LeafsevError, ValueError):
    """Malformed or truncated image stream."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class FormatError(LeafsevError, ValueError):
    """Image container not recognised."""


class EmptyMaskError(LeafsevError):
    """Segmentation left no foreground pixels to measure."""

    def __init__(self, message, mask=None):
        super().__init__(message)
        self.mask = mask


class AnnotationError(LeafsevError, ValueError):
    pass


class DegenerateDataError(LeafsevError, ValueError):
    """Statistic undefined for the data (zero variance, pooled p in {0, 1}, ...)."""


class SpecError(LeafsevError, ValueError):
    pass
