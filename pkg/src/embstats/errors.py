"""Exception hierarchy shared by all embstats modules."""


class EmbStatsError(Exception):
    """Base class for every error raised by this package."""


class StreamFormatError(EmbStatsError):
    """The byte stream does not follow the embedding-stream layout."""


class TruncatedStreamError(StreamFormatError):
    """The stream ended in the middle of a header or record.

    ``offset`` is the byte offset at which the incomplete unit started.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class DataValidationError(EmbStatsError):
    """A value violates a precondition (non-finite component, wrong length).

    ``index`` is the zero-based record index when known, ``component`` the
    offending vector component when known.
    """

    def __init__(self, message: str, index: int | None = None, component: int | None = None):
        super().__init__(message)
        self.index = index
        self.component = component


class DegenerateDataError(EmbStatsError):
    """Input is numerically degenerate for the requested operation
    (zero x-variance in a regression, zero mean in a C.V., rank-deficient PCA)."""


class EmptyInputError(EmbStatsError):
    """An operation that needs at least one element received none."""
