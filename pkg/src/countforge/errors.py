"""Exception types raised across the toolkit."""

from __future__ import annotations


class CountforgeError(Exception):
    """Base class for all toolkit errors."""


# --- annotation ingestion ---

class MalformedAnnotation(CountforgeError):
    """An annotation record is missing a field or has the wrong type."""

    def __init__(self, message: str, record_index: int | None = None):
        if record_index is not None:
            message = f"record {record_index}: {message}"
        super().__init__(message)
        self.record_index = record_index


class DuplicateImageId(CountforgeError):
    """Two records in one split share an image_id."""


class UnknownCategory(CountforgeError):
    """The requested category has no records in the annotation set."""


class UncoveredCount(CountforgeError):
    """A count falls into a gap of the density banding scheme."""


# --- dialogue / ranking generation ---

class CountOutsideRange(CountforgeError):
    """A ground-truth count lies outside the configured initial range."""


class MissingPlaceholder(CountforgeError):
    """A template was rendered without one of its required parameters."""


class EmptyCategory(CountforgeError):
    """A sampling pool for the requested scope contains no records."""


class InsufficientDiversity(CountforgeError):
    """Could not assemble a set with strictly distinct counts."""


# --- image geometry ---

class ImageTooSmall(CountforgeError):
    """Image dimensions cannot support the requested grid."""


class DegenerateCrop(CountforgeError):
    """A crop would be smaller than one pixel in some axis."""


class TileOutOfBounds(CountforgeError):
    """A tile extends past the source image boundary."""


class DecodeError(CountforgeError):
    """An image file could not be decoded."""


# --- model client ---

class ClientError(CountforgeError):
    """Base class for transport/parsing failures of the vision client."""


class Timeout(ClientError):
    """A request exceeded the configured timeout."""


class HttpError(ClientError):
    """The endpoint answered with a non-success HTTP status."""

    def __init__(self, status: int, message: str = ""):
        super().__init__(f"HTTP {status}" + (f": {message}" if message else ""))
        self.status = status


class AuthError(ClientError):
    """The endpoint rejected the request credentials."""


class RetriesExhausted(ClientError):
    """All retry attempts failed; carries the last underlying error."""

    def __init__(self, attempts: int, last_error: Exception):
        super().__init__(f"all {attempts} attempts failed, last: {last_error!r}")
        self.attempts = attempts
        self.last_error = last_error


class NoCountFound(ClientError):
    """A model reply contained no integer token to parse."""


# --- mock model ---

class UnknownScene(CountforgeError):
    """A query image does not resolve to a registered synthetic scene."""


class RegionOutOfBounds(CountforgeError):
    """A queried region lies outside the scene bounds."""


# --- inference / evaluation ---

class AllQueriesFailed(CountforgeError):
    """The global count query for an image failed unrecoverably."""


class MissingGroundTruth(CountforgeError):
    """An inference result references an image_id absent from the truth set."""


class EmptyResults(CountforgeError):
    """Evaluation was asked to run over zero results."""
