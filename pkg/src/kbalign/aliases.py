"""Alias pairs linking surface spellings to stored values.

The table ships next to each knowledge base fixture and backs both the stub
backend's co-reference verdicts and offline slot-filling measurement.
"""

from __future__ import annotations

import json
from pathlib import Path

from .text import normalize


class AliasMap:
    def __init__(self, pairs: list[tuple[str, str]] | None = None):
        self.pairs = [(a, b) for a, b in (pairs or [])]
        self._keys = {
            frozenset((normalize(a), normalize(b))) for a, b in self.pairs
        }

    def affirms(self, value_a: str, value_b: str) -> bool:
        """True when the two spellings refer to the same thing.

        Normalized equality always affirms; otherwise the (unordered) pair
        must be listed.
        """
        na, nb = normalize(value_a), normalize(value_b)
        if na == nb:
            return True
        return frozenset((na, nb)) in self._keys

    def surfaces_for(self, canonical: str) -> list[str]:
        """Alias spellings recorded for a canonical value."""
        target = normalize(canonical)
        out = []
        for a, b in self.pairs:
            if normalize(b) == target:
                out.append(a)
            elif normalize(a) == target:
                out.append(b)
        return out


def load_aliases(path: str | Path) -> AliasMap:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    return AliasMap([(pair[0], pair[1]) for pair in raw["pairs"]])
