"""Human-assisted alignment: pick a distinguishing attribute, ask, filter.

Attribute selection is greedy on the number of unique values, after
excluding the already-asked factors, columns whose values differ for every
candidate (the user cannot be expected to know those), and columns that
cannot split the set at all.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import AmbiguousReply
from .gateway import LmExchange, LmGateway
from .kb import CandidateSet, KnowledgeTable
from .text import contains_span, normalize, trigram_similarity

REPLY_SIMILARITY_THRESHOLD = 0.6


@dataclass
class AttributeProfile:
    column: str
    distinct_values: list[str]
    unique_count: int
    excluded_reason: str | None = None  # asked_factor | id_like_all_distinct | singleton

    def to_dict(self) -> dict:
        return {
            "column": self.column,
            "distinct_values": list(self.distinct_values),
            "unique_count": self.unique_count,
            "excluded_reason": self.excluded_reason,
        }


@dataclass
class ClarifyingTurn:
    slot: str
    options: list[str]
    question_text: str
    user_reply: str | None = None
    matched_value: str | None = None

    def to_dict(self) -> dict:
        return {
            "slot": self.slot,
            "options": list(self.options),
            "question_text": self.question_text,
            "user_reply": self.user_reply,
            "matched_value": self.matched_value,
        }


def build_profiles(
    candidates: CandidateSet,
    asked_columns: set[str],
    table: KnowledgeTable,
) -> list[AttributeProfile]:
    """Profile every column over the candidate rows, marking exclusions."""
    n = len(candidates)
    asked = {normalize(c) for c in asked_columns}
    profiles = []
    for column in table.columns:
        seen: dict[str, str] = {}
        for _, row_index in candidates.sources():
            value = table.cell(row_index, column.name)
            if value is None:
                continue
            key = normalize(value)
            if key and key not in seen:
                seen[key] = value
        values = list(seen.values())
        reason = None
        if normalize(column.name) in asked:
            reason = "asked_factor"
        elif len(values) == n:
            reason = "id_like_all_distinct"
        elif len(values) <= 1:
            reason = "singleton"
        profiles.append(
            AttributeProfile(
                column=column.name,
                distinct_values=values,
                unique_count=len(values),
                excluded_reason=reason,
            )
        )
    return profiles


def select_attribute(
    candidates: CandidateSet,
    asked_columns: set[str],
    table: KnowledgeTable,
) -> AttributeProfile | None:
    """The most distinguishing askable attribute, or None when none exists.

    Requires at least two candidates. Ties on unique count break toward
    schema column order.
    """
    if len(candidates) < 2:
        raise ValueError("attribute selection needs at least two candidates")
    best: AttributeProfile | None = None
    for profile in build_profiles(candidates, asked_columns, table):
        if profile.excluded_reason is not None:
            continue
        if best is None or profile.unique_count > best.unique_count:
            best = profile
    return best


def generate_clarifying_question(
    question: str,
    profile: AttributeProfile,
    gateway: LmGateway,
    transcript: list[LmExchange] | None = None,
) -> ClarifyingTurn:
    """Ask the model to phrase a question confirming the profiled slot."""
    if len(profile.distinct_values) < 2:
        raise ValueError("clarifying question needs at least two options")
    exchange = gateway.run(
        "clarify_gen",
        {
            "USER_QUESTION": question,
            "SLOT": profile.column,
            "VALUES": ", ".join(profile.distinct_values),
        },
        transcript,
    )
    return ClarifyingTurn(
        slot=profile.column,
        options=list(profile.distinct_values),
        question_text=exchange.completion.strip(),
    )


def _match_option(options: list[str], reply: str) -> str | None:
    contained = [opt for opt in options if contains_span(reply, opt)]
    if contained:
        # When one contained option is a sub-span of another, the longer
        # option subsumes it ("New York Yankees" over "New York").
        maximal = [
            opt
            for opt in contained
            if not any(other != opt and contains_span(other, opt) for other in contained)
        ]
        if len(maximal) > 1:
            raise AmbiguousReply(maximal)
        return maximal[0]
    best, best_sim = None, REPLY_SIMILARITY_THRESHOLD
    for opt in options:
        sim = trigram_similarity(reply, opt)
        if sim > best_sim:
            best, best_sim = opt, sim
    return best


def apply_user_reply(
    turn: ClarifyingTurn,
    reply: str,
    candidates: CandidateSet,
    table: KnowledgeTable,
) -> tuple[CandidateSet, ClarifyingTurn]:
    """Match the reply against the offered options and filter candidates.

    Exact (token-span) containment wins; otherwise the best trigram
    similarity above the threshold. With no match the candidates pass
    through unfiltered and the turn records a null match.
    """
    if not reply.strip():
        raise ValueError("reply must be non-empty")
    matched = _match_option(turn.options, reply)
    turn.user_reply = reply
    turn.matched_value = matched
    if matched is None:
        return candidates, turn
    target = normalize(matched)
    kept = [
        g
        for g in candidates.groundings
        if (cell := table.cell(g.source[1], turn.slot)) is not None
        and normalize(cell) == target
    ]
    filtered = CandidateSet(
        groundings=kept,
        retrieval_mode=candidates.retrieval_mode,
        query_echo=f"{candidates.query_echo} + {turn.slot}={matched}",
    )
    return filtered, turn
