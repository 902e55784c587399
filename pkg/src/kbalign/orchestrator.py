"""Session state machine and pipeline-mode dispatch.

A session moves created -> aligned -> (awaiting_clarification -> aligned)*
-> answered, or to failed on a downstream error. Modes:

  direct_lm        no retrieval, plain question-answering prompt
  ralm             lexical top-k retrieval, no clarification
  clam             clarify from the question alone, then the grounding policy
  model_align_only model-based alignment without clarification
  mixalign         full method: model alignment plus clarification loop
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from .aliases import AliasMap
from .answer import AnswerResult, generate_answer, generate_direct_answer
from .errors import (
    AmbiguousReply,
    CompletionEmpty,
    EmptyQuestion,
    KbAlignError,
    UnknownSession,
    WrongState,
)
from .gateway import LmExchange, LmGateway
from .human_align import (
    ClarifyingTurn,
    apply_user_reply,
    generate_clarifying_question,
    select_attribute,
)
from .kb import CandidateSet, Grounding, KbStore, lexical_retrieve
from .model_align import AlignmentMetadata, align_and_retrieve

PIPELINE_MODES = ("direct_lm", "ralm", "clam", "model_align_only", "mixalign")

CLAM_SLOT = "details"


@dataclass
class EngineConfig:
    default_k: int = 5
    max_rounds: int = 1
    clam_uses_retrieval: bool = True
    session_log: str | None = None


@dataclass
class Session:
    session_id: str
    question: str
    mode: str
    k: int
    table_name: str
    state: str = "created"
    candidates: CandidateSet = field(
        default_factory=lambda: CandidateSet([], retrieval_mode="none")
    )
    metadata: AlignmentMetadata = field(default_factory=AlignmentMetadata)
    turns: list[ClarifyingTurn] = field(default_factory=list)
    result: AnswerResult | None = None
    transcript: list[LmExchange] = field(default_factory=list)
    rounds_used: int = 0
    ambiguous_retries: int = 0
    failure: str | None = None
    # Set by the evaluation harness to pin the grounding set; never serialized.
    grounding_override: CandidateSet | None = None

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "question": self.question,
            "mode": self.mode,
            "k": self.k,
            "table_name": self.table_name,
            "state": self.state,
            "candidates": {
                "retrieval_mode": self.candidates.retrieval_mode,
                "query_echo": self.candidates.query_echo,
                "groundings": [
                    {
                        "source": list(g.source),
                        "text": g.text,
                        "relevance_score": g.relevance_score,
                    }
                    for g in self.candidates.groundings
                ],
            },
            "metadata": self.metadata.to_dict(),
            "turns": [t.to_dict() for t in self.turns],
            "result": self.result.to_dict() if self.result else None,
            "failure": self.failure,
            "rounds_used": self.rounds_used,
            "transcript": [x.to_dict() for x in self.transcript],
        }


class Engine:
    """Owns the knowledge store, the gateway, and all live sessions."""

    def __init__(
        self,
        store: KbStore,
        gateway: LmGateway,
        aliases: AliasMap | None = None,
        config: EngineConfig | None = None,
        default_table: str | None = None,
    ):
        self.store = store
        self.gateway = gateway
        self.aliases = aliases or AliasMap()
        self.config = config or EngineConfig()
        names = store.names()
        self.default_table = default_table or (names[0] if names else "")
        self._sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry_lock = threading.Lock()

    # Session lifecycle -------------------------------------------------------

    def start_session(
        self,
        question: str,
        mode: str,
        k: int | None = None,
        table_name: str | None = None,
        grounding_override: CandidateSet | None = None,
    ) -> Session:
        if not question or not question.strip():
            raise EmptyQuestion("question is empty")
        if mode not in PIPELINE_MODES:
            raise ValueError(f"unknown mode {mode!r}; expected one of {PIPELINE_MODES}")
        session = Session(
            session_id=uuid.uuid4().hex,
            question=question.strip(),
            mode=mode,
            k=k or self.config.default_k,
            table_name=table_name or self.default_table,
            grounding_override=grounding_override,
        )
        with self._registry_lock:
            self._sessions[session.session_id] = session
            self._locks[session.session_id] = threading.Lock()
        try:
            self._advance_new(session)
        except KbAlignError as exc:
            session.state = "failed"
            session.failure = str(exc)
        self._log(session)
        return session

    def get_session(self, session_id: str) -> Session:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSession(f"no session {session_id!r}") from None

    def submit_clarification(self, session_id: str, reply: str) -> Session:
        session = self.get_session(session_id)
        with self._locks[session_id]:
            if session.state != "awaiting_clarification":
                raise WrongState(
                    f"session is {session.state!r}, not awaiting clarification"
                )
            if not reply or not reply.strip():
                raise ValueError("reply must be non-empty")
            try:
                self._consume_reply(session, reply.strip())
            except AmbiguousReply:
                if session.ambiguous_retries < 1:
                    session.ambiguous_retries += 1
                    raise
                turn = session.turns[-1]
                turn.user_reply = reply.strip()
                turn.matched_value = None
                session.state = "aligned"
                self._finish(session)
            except KbAlignError as exc:
                session.state = "failed"
                session.failure = str(exc)
            self._log(session)
            return session

    # Pipeline steps ----------------------------------------------------------

    def _table(self, session: Session):
        return self.store.get(session.table_name)

    def _advance_new(self, session: Session) -> None:
        mode = session.mode
        if mode == "direct_lm":
            session.metadata = AlignmentMetadata(mode="none")
            session.state = "aligned"
            session.result = generate_direct_answer(
                session.question, self.gateway, session.transcript
            )
            session.state = "answered"
            return
        if mode == "clam":
            session.metadata = AlignmentMetadata(mode="none")
            session.state = "aligned"
            exchange = self.gateway.run(
                "clam_clarify", {"USER_QUESTION": session.question}, session.transcript
            )
            session.turns.append(
                ClarifyingTurn(
                    slot=CLAM_SLOT, options=[], question_text=exchange.completion.strip()
                )
            )
            session.rounds_used += 1
            session.state = "awaiting_clarification"
            return

        retrieval = "lexical" if mode == "ralm" else "structured"
        candidates, metadata = align_and_retrieve(
            session.question,
            self._table(session),
            retrieval,
            session.k,
            self.gateway,
            session.transcript,
            self.aliases,
        )
        if session.grounding_override is not None:
            candidates = session.grounding_override
        session.candidates = candidates
        session.metadata = metadata
        session.state = "aligned"
        if mode == "mixalign" and self._maybe_clarify(session):
            return
        self._finish(session)

    def _consume_reply(self, session: Session, reply: str) -> None:
        turn = session.turns[-1]
        if session.mode == "clam":
            turn.user_reply = reply
            turn.matched_value = None
            augmented = f"{session.question} {reply}"
            if session.grounding_override is not None:
                session.candidates = session.grounding_override
            elif self.config.clam_uses_retrieval:
                session.candidates = lexical_retrieve(
                    self._table(session), augmented, session.k
                )
            session.state = "aligned"
            self._finish(session)
            return
        filtered, _ = apply_user_reply(
            turn, reply, session.candidates, self._table(session)
        )
        session.candidates = filtered
        session.state = "aligned"
        if session.mode == "mixalign" and self._maybe_clarify(session):
            return
        self._finish(session)

    def _maybe_clarify(self, session: Session) -> bool:
        """Open a clarification round when the candidate set stays ambiguous."""
        if len(session.candidates) < 2 or session.rounds_used >= self.config.max_rounds:
            return False
        asked = session.metadata.asked_columns() | {t.slot for t in session.turns}
        profile = select_attribute(session.candidates, asked, self._table(session))
        if profile is None:
            return False
        try:
            turn = generate_clarifying_question(
                session.question, profile, self.gateway, session.transcript
            )
        except CompletionEmpty:
            try:
                turn = generate_clarifying_question(
                    session.question, profile, self.gateway, session.transcript
                )
            except CompletionEmpty:
                return False  # clarification aborted; answer with the full set
        session.turns.append(turn)
        session.rounds_used += 1
        session.state = "awaiting_clarification"
        return True

    def _finish(self, session: Session) -> None:
        session.result = generate_answer(
            session.question,
            session.candidates,
            session.metadata,
            self.gateway,
            session.transcript,
            session.turns,
        )
        session.state = "answered"

    # Batch driving -----------------------------------------------------------

    def run_record(
        self,
        record,
        mode: str,
        k: int | None = None,
        simulator: str = "deterministic",
        grounding_override: CandidateSet | None = None,
    ) -> Session:
        """Run one dataset record non-interactively, simulating the user."""
        from .evaluation import simulate_user

        session = self.start_session(
            record.question,
            mode,
            k=k,
            table_name=record.table_ref,
            grounding_override=grounding_override,
        )
        while session.state == "awaiting_clarification":
            reply = simulate_user(
                session.turns[-1],
                record,
                simulator,
                store=self.store,
                gateway=self.gateway,
                transcript=session.transcript,
            )
            try:
                session = self.submit_clarification(session.session_id, reply)
            except AmbiguousReply:
                continue  # resubmitting falls through to the no-match path
        return session

    def run_batch(
        self,
        records,
        mode: str,
        k: int | None = None,
        out_path: str | Path | None = None,
        simulator: str = "deterministic",
    ) -> dict:
        """Run every record, write per-record JSONL results, return counts."""
        from .evaluation import MetricScores, score_record

        results = []
        pairs = []
        failed = 0
        for record in records:
            session = self.run_record(record, mode, k=k, simulator=simulator)
            if session.state == "failed" or session.result is None:
                failed += 1
                coverage, hallucination = 0, None
                answer_text, abstained = "", False
            else:
                coverage, hallucination = score_record(record, session.result, self.store)
                answer_text = session.result.answer_text
                abstained = session.result.abstained
            pairs.append((coverage, hallucination))
            results.append(
                {
                    "record_id": record.record_id,
                    "mode": mode,
                    "state": session.state,
                    "answer_text": answer_text,
                    "abstained": abstained,
                    "coverage": coverage,
                    "hallucination": hallucination,
                    "turns": [t.to_dict() for t in session.turns],
                    "sources": [list(s) for s in session.candidates.sources()],
                }
            )
        if out_path:
            with open(out_path, "w", encoding="utf-8") as fh:
                for row in results:
                    fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        scores = MetricScores.from_pairs(pairs)
        return {
            "total": len(results),
            "answered": sum(1 for r in results if r["state"] == "answered"),
            "failed": failed,
            "abstentions": scores.abstention_count,
            "coverage": scores.coverage,
            "hallucination": scores.hallucination,
        }

    # Crash-recovery log ------------------------------------------------------

    def _log(self, session: Session) -> None:
        if not self.config.session_log:
            return
        with open(self.config.session_log, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(session.to_dict(), ensure_ascii=False) + "\n")

    def recover_sessions(self, path: str | Path) -> int:
        """Reload the latest snapshot of each logged session."""
        latest: dict[str, dict] = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    snapshot = json.loads(line)
                    latest[snapshot["session_id"]] = snapshot
        for snapshot in latest.values():
            session = _session_from_dict(snapshot)
            with self._registry_lock:
                self._sessions[session.session_id] = session
                self._locks.setdefault(session.session_id, threading.Lock())
        return len(latest)


def _session_from_dict(snapshot: dict) -> Session:
    candidates = CandidateSet(
        groundings=[
            Grounding(
                source=tuple(g["source"]),
                text=g["text"],
                relevance_score=g.get("relevance_score", 0.0),
            )
            for g in snapshot["candidates"]["groundings"]
        ],
        retrieval_mode=snapshot["candidates"]["retrieval_mode"],
        query_echo=snapshot["candidates"].get("query_echo", ""),
    )
    meta_raw = snapshot.get("metadata", {})
    metadata = AlignmentMetadata(mode=meta_raw.get("mode", "structured"))
    metadata.raw_sql = meta_raw.get("raw_sql")
    metadata.parse_path = meta_raw.get("parse_path")
    metadata.warnings = list(meta_raw.get("warnings", []))
    metadata.fallback_lexical = bool(meta_raw.get("fallback_lexical", False))
    from .model_align import CoreferenceLink, ExtractedSlot

    metadata.slots = [
        ExtractedSlot(
            s["column"], s["surface_value"], s["resolved_value"], s["resolution"], s.get("op", "eq")
        )
        for s in meta_raw.get("slots", [])
    ]
    metadata.links = [
        CoreferenceLink(
            l["surface_value"], l["kb_value"], l["verdict"], l.get("exchange_index", -1)
        )
        for l in meta_raw.get("links", [])
    ]
    turns = [
        ClarifyingTurn(
            slot=t["slot"],
            options=list(t["options"]),
            question_text=t["question_text"],
            user_reply=t.get("user_reply"),
            matched_value=t.get("matched_value"),
        )
        for t in snapshot.get("turns", [])
    ]
    result = None
    if snapshot.get("result"):
        r = snapshot["result"]
        result = AnswerResult(
            answer_text=r["answer_text"],
            used_groundings=[tuple(s) for s in r.get("used_groundings", [])],
            abstained=bool(r.get("abstained", False)),
            alignment_echo=r.get("alignment_echo", {}),
        )
    transcript = [
        LmExchange(
            template_id=x["template_id"],
            rendered_prompt=x["rendered_prompt"],
            completion=x["completion"],
            backend=x["backend"],
            latency_ms=x.get("latency_ms", 0),
        )
        for x in snapshot.get("transcript", [])
    ]
    return Session(
        session_id=snapshot["session_id"],
        question=snapshot["question"],
        mode=snapshot["mode"],
        k=snapshot["k"],
        table_name=snapshot["table_name"],
        state=snapshot["state"],
        candidates=candidates,
        metadata=metadata,
        turns=turns,
        result=result,
        transcript=transcript,
        rounds_used=snapshot.get("rounds_used", 0),
        failure=snapshot.get("failure"),
    )
