"""HTTP JSON API over the session engine.

    POST /sessions                {question, mode, k}  -> session snapshot
    POST /sessions/{id}/clarify   {reply}              -> session snapshot
    GET  /sessions/{id}                                -> session snapshot
    GET  /healthz

Guard failures map to: 404 unknown session, 409 wrong state or ambiguous
reply (the clarifying question is re-posed), 422 invalid input.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel

from .errors import AmbiguousReply, EmptyQuestion, UnknownSession, WrongState
from .orchestrator import PIPELINE_MODES, Engine


class StartSessionRequest(BaseModel):
    question: str
    mode: str = "mixalign"
    k: int | None = None


class ClarifyRequest(BaseModel):
    reply: str


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="kbalign", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok", "tables": engine.store.names()}

    @app.post("/sessions")
    def start_session(request: StartSessionRequest) -> dict:
        if request.mode not in PIPELINE_MODES:
            raise HTTPException(422, f"unknown mode {request.mode!r}")
        if request.k is not None and request.k < 1:
            raise HTTPException(422, "k must be >= 1")
        try:
            session = engine.start_session(request.question, request.mode, k=request.k)
        except EmptyQuestion as exc:
            raise HTTPException(422, str(exc)) from None
        return session.to_dict()

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str) -> dict:
        try:
            return engine.get_session(session_id).to_dict()
        except UnknownSession as exc:
            raise HTTPException(404, str(exc)) from None

    @app.post("/sessions/{session_id}/clarify")
    def clarify(session_id: str, request: ClarifyRequest) -> dict:
        try:
            session = engine.submit_clarification(session_id, request.reply)
        except UnknownSession as exc:
            raise HTTPException(404, str(exc)) from None
        except WrongState as exc:
            raise HTTPException(409, str(exc)) from None
        except AmbiguousReply as exc:
            session = engine.get_session(session_id)
            raise HTTPException(
                409,
                detail={
                    "error": "ambiguous_reply",
                    "message": str(exc),
                    "question_text": session.turns[-1].question_text,
                    "options": session.turns[-1].options,
                },
            ) from None
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from None
        return session.to_dict()

    return app
