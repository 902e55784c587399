"""Final answer composition from groundings and alignment results."""

from __future__ import annotations

from dataclasses import dataclass, field

from .gateway import (
    NO_EVIDENCE_MARKER,
    NONE_MARKER,
    LmExchange,
    LmGateway,
)
from .human_align import ClarifyingTurn
from .kb import CandidateSet
from .model_align import AlignmentMetadata
from .text import normalize

DEFAULT_ABSTENTION_PHRASES = (
    "cannot answer",
    "not enough information",
    "i don't know",
    "unable to determine",
)


def detect_abstention(
    text: str, phrases: tuple[str, ...] = DEFAULT_ABSTENTION_PHRASES
) -> bool:
    """True when the normalized text contains any listed abstention phrase."""
    normalized = normalize(text)
    return any(phrase in normalized for phrase in phrases)


@dataclass
class AnswerResult:
    answer_text: str
    used_groundings: list[tuple[str, int]] = field(default_factory=list)
    abstained: bool = False
    alignment_echo: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "answer_text": self.answer_text,
            "used_groundings": [list(source) for source in self.used_groundings],
            "abstained": self.abstained,
            "alignment_echo": self.alignment_echo,
        }


def build_answer_bindings(
    question: str,
    candidates: CandidateSet,
    metadata: AlignmentMetadata,
    turns: list[ClarifyingTurn] | tuple[ClarifyingTurn, ...] = (),
) -> dict[str, str]:
    """Assemble the answer prompt sections, in a fixed order.

    Evidence lists each surviving grounding's text exactly once; alignment
    notes state each affirmed co-reference; the clarifying exchange is
    included only when the user actually replied.
    """
    if candidates.groundings:
        evidence = "\n".join(f"- {g.text}" for g in candidates.groundings)
    else:
        evidence = NO_EVIDENCE_MARKER
    notes = [
        f"{link.surface_value} refers to {link.kb_value}"
        for link in metadata.affirmed_links()
    ]
    answered = [t for t in turns if t.user_reply is not None]
    clarification = "\n".join(
        f"Q: {t.question_text}\nA: {t.user_reply}" for t in answered
    )
    return {
        "QUESTION": question,
        "EVIDENCE": evidence,
        "ALIGNMENT_NOTES": "\n".join(notes) if notes else NONE_MARKER,
        "CLARIFICATION": clarification if clarification else NONE_MARKER,
    }


def generate_answer(
    question: str,
    candidates: CandidateSet,
    metadata: AlignmentMetadata,
    gateway: LmGateway,
    transcript: list[LmExchange] | None = None,
    turns: list[ClarifyingTurn] | tuple[ClarifyingTurn, ...] = (),
) -> AnswerResult:
    """Render the grounded answer prompt, complete it, flag abstentions."""
    bindings = build_answer_bindings(question, candidates, metadata, turns)
    exchange = gateway.run("answer_gen", bindings, transcript)
    text = exchange.completion.strip()
    return AnswerResult(
        answer_text=text,
        used_groundings=candidates.sources(),
        abstained=detect_abstention(text),
        alignment_echo=metadata.to_dict(),
    )


def generate_direct_answer(
    question: str,
    gateway: LmGateway,
    transcript: list[LmExchange] | None = None,
) -> AnswerResult:
    """Ungrounded answer used by the no-retrieval baseline."""
    exchange = gateway.run("direct_qa", {"QUESTION": question}, transcript)
    text = exchange.completion.strip()
    return AnswerResult(
        answer_text=text,
        used_groundings=[],
        abstained=detect_abstention(text),
        alignment_echo={},
    )
