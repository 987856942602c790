"""Exception types shared across the toolkit."""

from __future__ import annotations


class DisfluentError(Exception):
    """Base class for every error raised by this package."""


# --- markup parsing ---------------------------------------------------------


class MarkupError(DisfluentError):
    """Invalid disfluency markup.

    ``offset`` is the UTF-8 byte offset into the input string at which the
    problem was detected.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class UnbalancedBracketError(MarkupError):
    """A bracket or brace was opened but never closed, or closed unopened."""


class MissingInterruptionPointError(MarkupError):
    """A bracketed restart has no '+' separating reparandum from repair."""


class EmptyBraceError(MarkupError):
    """A filler / editing-term / discourse-marker brace contains no tokens."""


# --- annotated utterances ---------------------------------------------------


class InvalidUtteranceError(DisfluentError):
    """Token or span structure violates the annotation invariants."""


class IllFormedTagSequenceError(DisfluentError):
    """A BIO tag sequence breaks B/I/O continuity rules."""


class LengthMismatchError(DisfluentError):
    """Two parallel sequences that must have equal length do not."""


class EmptyUtteranceError(DisfluentError):
    """An operation that needs at least one token got an empty utterance."""


# --- corpus handling --------------------------------------------------------


class FormatError(DisfluentError):
    """A corpus file record could not be decoded. ``line`` is 1-based."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class EmptyCorpusError(DisfluentError):
    """An operation that needs at least one record got an empty corpus."""


class BadFractionError(DisfluentError):
    """A split fraction falls outside the open interval (0, 1)."""


# --- alignment, events, and the insertion model -----------------------------


class NonMonotonicPairError(DisfluentError):
    """The fluent side is not an in-order subsequence of the disfluent side."""


class EmptyTrainingSetError(DisfluentError):
    """Model training received no usable parallel pairs."""


class EmptyInputError(DisfluentError):
    """An operation that needs non-empty input got an empty one."""


class RateUnreachableError(DisfluentError):
    """The requested disfluency rate cannot be met under the configuration."""


class ModelVersionError(DisfluentError):
    """A serialized model file has an unsupported format version."""


# --- fine-tune config and the remote insertion client -----------------------


class InvalidOverrideError(DisfluentError):
    """A fine-tune configuration override names an unknown field or bad value."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class RemoteTimeoutError(DisfluentError):
    """The remote insertion endpoint did not answer within the timeout."""


class RemoteHttpError(DisfluentError):
    """The remote insertion endpoint answered with an error status.

    ``status`` is the HTTP status code, or None for transport-level failures.
    """

    def __init__(self, status: int | None, message: str):
        super().__init__(message)
        self.status = status


class UnparseableCompletionError(DisfluentError):
    """A remote completion could not be normalized into valid markup."""


class RoundTripViolationError(DisfluentError):
    """A remote completion does not strip back to the exact input words."""


# --- evaluation -------------------------------------------------------------


class DimensionMismatchError(DisfluentError):
    """Embedding vectors do not share a common dimensionality."""


class NonUnitVectorError(DisfluentError):
    """An embedding vector is not unit-norm within tolerance."""


class TooFewSamplesError(DisfluentError):
    """A statistical test needs more observations per sample."""


class ZeroVarianceError(DisfluentError):
    """A statistical test is undefined because the pooled variance is zero."""
