"""Shared string normalization, tokenization, and similarity helpers.

One normalization rule is used everywhere (query predicates, reply matching,
metric value extraction): lowercase, trim, collapse internal whitespace, strip
surrounding punctuation.
"""

from __future__ import annotations

import re
import string

_WHITESPACE = re.compile(r"\s+")
_NON_TOKEN = re.compile(r"[^\w\s]+")


def normalize(text: str) -> str:
    """Lowercase, trim, collapse internal whitespace, strip edge punctuation."""
    out = _WHITESPACE.sub(" ", text.strip().lower())
    return out.strip(string.punctuation + " ")


def tokenize(text: str) -> list[str]:
    """Lowercased whitespace tokens with punctuation stripped out."""
    return _NON_TOKEN.sub(" ", text.lower()).split()


def contains_span(haystack: str, needle: str) -> bool:
    """True if needle's tokens occur as a contiguous token span in haystack."""
    hay = tokenize(haystack)
    ned = tokenize(needle)
    if not ned:
        return False
    n = len(ned)
    return any(hay[i : i + n] == ned for i in range(len(hay) - n + 1))


def _trigrams(text: str) -> set[str]:
    padded = f" {text} "
    if len(padded) < 3:
        return {padded}
    return {padded[i : i + 3] for i in range(len(padded) - 2)}


def trigram_similarity(a: str, b: str) -> float:
    """Dice coefficient over character trigrams of the normalized strings."""
    na, nb = normalize(a), normalize(b)
    if not na or not nb:
        return 1.0 if na == nb else 0.0
    ta, tb = _trigrams(na), _trigrams(nb)
    return 2.0 * len(ta & tb) / (len(ta) + len(tb))
