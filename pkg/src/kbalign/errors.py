"""Exception hierarchy for the kbalign package."""

from __future__ import annotations


class KbAlignError(Exception):
    """Base class for all package errors."""


# Knowledge store -----------------------------------------------------------


class ParseError(KbAlignError):
    """A table file row could not be parsed; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(message if line is None else f"line {line}: {message}")


class SchemaMismatch(KbAlignError):
    """File header/keys do not match the declared schema columns."""


class UnknownColumn(KbAlignError):
    """A query referenced a column that does not exist in the table."""


class PredicateTypeError(KbAlignError):
    """A predicate value cannot be interpreted as the column's value kind."""


class EmptyTable(KbAlignError):
    """Retrieval was attempted against a table with no rows."""


# Language-model gateway ----------------------------------------------------


class MissingBinding(KbAlignError):
    """A prompt placeholder had no binding; carries the placeholder name."""

    def __init__(self, placeholder: str):
        self.placeholder = placeholder
        super().__init__(f"no binding for placeholder {placeholder!r}")


class BackendUnavailable(KbAlignError):
    """The completion backend could not be reached after retries."""


class RateLimited(KbAlignError):
    """The backend rejected the request; carries a retry-after hint (seconds)."""

    def __init__(self, message: str = "rate limited", retry_after: float | None = None):
        self.retry_after = retry_after
        super().__init__(message)


class CompletionEmpty(KbAlignError):
    """The backend returned an empty completion."""


# Alignment -----------------------------------------------------------------


class UnparsableSql(KbAlignError):
    """Strict parsing failed and the caller asked not to fall back."""


class AmbiguousReply(KbAlignError):
    """Two clarification options were both contained in the user's reply."""

    def __init__(self, options: list[str]):
        self.options = options
        super().__init__(f"reply matches more than one option: {options}")


# Sessions ------------------------------------------------------------------


class EmptyQuestion(KbAlignError):
    """The submitted question is empty after trimming."""


class UnknownSession(KbAlignError):
    """No session with the given id exists."""


class WrongState(KbAlignError):
    """The operation is not allowed in the session's current state."""


# Evaluation ----------------------------------------------------------------


class DatasetParseError(KbAlignError):
    """A dataset record could not be parsed; carries the record index."""

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        super().__init__(message if index is None else f"record {index}: {message}")


class MissingGoldRow(KbAlignError):
    """An evaluation record points at a row that is not in the table."""


class InsufficientRows(KbAlignError):
    """The table has fewer spare rows than the requested distractor count."""
