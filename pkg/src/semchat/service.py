"""HTTP inference service with explainable, intervenable turns.

A turn is two steps: posting a user message runs understanding and planning
and returns both without generating, so a human (or rule) can inspect and
edit the proposed plan; a second call generates the response, optionally with
the edited plan. Sessions live in memory, one lock per session; the loaded
checkpoint is shared read-only across sessions.
"""

from __future__ import annotations

import itertools
import threading
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from .corpus import SemanticAnnotation, Speaker
from .decode import (
    DecodingPolicy,
    GenerationTrace,
    HistoryTurn,
    LanguageModel,
    StageDecoder,
    apply_plan_override,
    build_decoder,
    default_policy,
    plan,
    understand,
)
from .linearize import Linearizer, TokenType
from .tokenizer import content_tokens


class ServiceError(Exception):
    code = "service_error"
    status = 500


class UnknownSessionError(ServiceError):
    code = "unknown_session"
    status = 404


class OutOfTurnError(ServiceError):
    code = "out_of_turn"
    status = 409


class BadRequestError(ServiceError):
    code = "invalid_request"
    status = 400


@dataclass
class _PendingTurn:
    prefix_ids: list[int]
    prefix_types: list[int]
    understood: SemanticAnnotation | None
    understood_raw: list[int]
    understood_valid: bool
    planned: SemanticAnnotation | None
    planned_raw: list[int]
    planned_valid: bool


@dataclass
class SessionState:
    session_id: str
    policy: DecodingPolicy
    context: str = ""
    history: list[HistoryTurn] = field(default_factory=list)
    traces: list[GenerationTrace] = field(default_factory=list)
    pending: _PendingTurn | None = None
    last_turn: _PendingTurn | None = None
    next_seed: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


class ChatEngine:
    """Session registry plus the two-step turn logic over one model."""

    def __init__(self, lm: LanguageModel, linearizer: Linearizer,
                 policy: DecodingPolicy | None = None):
        self.lm = lm
        self.linearizer = linearizer
        self.default_policy = policy or default_policy()
        self._sessions: dict[str, SessionState] = {}
        self._registry_lock = threading.Lock()
        self._ids = itertools.count(1)

    def create_session(self, policy: DecodingPolicy | None = None,
                       context: str = "") -> SessionState:
        with self._registry_lock:
            session_id = f"s{next(self._ids):06d}"
            state = SessionState(
                session_id=session_id,
                policy=policy or self.default_policy,
                context=context,
            )
            self._sessions[session_id] = state
            return state

    def get_session(self, session_id: str) -> SessionState:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSessionError(f"no session {session_id!r}") from None

    def post_user_message(self, session_id: str, text: str) -> _PendingTurn:
        session = self.get_session(session_id)
        if not text or not text.strip():
            raise BadRequestError("message text is empty")
        with session.lock:
            if session.pending is not None:
                raise OutOfTurnError("a pending message awaits generation")
            if session.history and session.history[-1].speaker is Speaker.HUMAN:
                raise OutOfTurnError("it is the machine's turn")
            session.history.append(HistoryTurn(Speaker.HUMAN, text, None))
            dec = build_decoder(
                self.lm, self.linearizer, session.context, session.history
            )
            understood = None
            understood_raw: list[int] = []
            understood_valid = True
            if session.policy.use_understanding:
                parsed, understood_raw = understand(dec, session.policy)
                understood, understood_valid = parsed.annotation, parsed.valid
            planned = None
            planned_raw: list[int] = []
            planned_valid = True
            prefix_ids = list(dec.prefix_ids)
            prefix_types = list(dec.prefix_types)
            if session.policy.use_planning:
                parsed, planned_raw = plan(dec, session.policy)
                planned, planned_valid = parsed.annotation, parsed.valid
            session.pending = _PendingTurn(
                prefix_ids=prefix_ids,
                prefix_types=prefix_types,
                understood=understood,
                understood_raw=understood_raw,
                understood_valid=understood_valid,
                planned=planned,
                planned_raw=planned_raw,
                planned_valid=planned_valid,
            )
            return session.pending

    def generate(
        self,
        session_id: str,
        plan_override: SemanticAnnotation | None = None,
        seed: int | None = None,
        regenerate: bool = False,
    ) -> GenerationTrace:
        """Produce the Machine turn for the pending message.

        ``regenerate=True`` re-opens the most recent completed turn instead:
        its Machine utterance and trace are discarded and the turn is decoded
        again (typically with a fresh seed and the same plan).
        """
        session = self.get_session(session_id)
        with session.lock:
            if regenerate:
                if session.pending is not None:
                    raise OutOfTurnError("a pending message awaits generation")
                if session.last_turn is None or not session.traces:
                    raise OutOfTurnError("no completed turn to regenerate")
                session.history.pop()
                session.traces.pop()
                session.pending = session.last_turn
            pending = session.pending
            if pending is None:
                raise OutOfTurnError("no pending message to respond to")
            dec = StageDecoder(self.lm, self.linearizer.tokenizer, self.linearizer)
            dec.prefix_ids = list(pending.prefix_ids)
            dec.prefix_types = list(pending.prefix_types)
            spans: dict[str, list[int]] = {}
            if pending.understood_raw:
                spans["understanding"] = pending.understood_raw
            overridden = plan_override is not None
            if overridden:
                spans["planning"] = apply_plan_override(dec, plan_override)
                planned = plan_override
                planned_valid = True
            else:
                planned = pending.planned
                planned_valid = pending.planned_valid
                if pending.planned_raw:
                    dec.prefix_ids.extend(pending.planned_raw)
                    dec.prefix_types.extend(
                        [int(TokenType.MACHINE_SEM)] * len(pending.planned_raw)
                    )
                    spans["planning"] = pending.planned_raw
            if seed is None:
                seed = session.next_seed
            session.next_seed = seed + 1
            rng = np.random.default_rng(seed)
            response, response_ids = dec.decode_response(session.policy.response, rng)
            spans["response"] = response_ids
            trace = GenerationTrace(
                understood=pending.understood,
                planned=planned,
                plan_overridden=overridden,
                response=response,
                spans=spans,
                seed=seed,
                understood_valid=pending.understood_valid,
                planned_valid=planned_valid,
            )
            # The pending human turn gains its understood annotation; the new
            # machine turn carries the plan that conditioned it.
            session.history[-1] = HistoryTurn(
                Speaker.HUMAN, session.history[-1].text, pending.understood
            )
            session.history.append(HistoryTurn(Speaker.MACHINE, response, planned))
            session.traces.append(trace)
            session.last_turn = pending
            session.pending = None
            return trace


def annotation_from_payload(payload: dict) -> SemanticAnnotation:
    """Parse an annotation body; topical phrases may be strings or token lists."""
    if not isinstance(payload, dict):
        raise BadRequestError("annotation must be an object")
    topical = []
    for item in payload.get("topical_words", []):
        if isinstance(item, str):
            topical.append(content_tokens(item))
        elif isinstance(item, list):
            topical.append([str(t) for t in item])
        else:
            raise BadRequestError("topical_words items must be strings or token lists")
    try:
        return SemanticAnnotation.make(
            emotions=payload.get("emotions", []),
            dialogue_acts=payload.get("dialogue_acts", []),
            topical_words=topical,
        )
    except ValueError as exc:
        raise BadRequestError(f"bad annotation: {exc}") from exc


def _session_view(session: SessionState, linearizer: Linearizer) -> dict:
    tokenizer = linearizer.tokenizer
    return {
        "session_id": session.session_id,
        "context": session.context,
        "policy": session.policy.to_dict(),
        "history": [
            {
                "speaker": turn.speaker.value,
                "text": turn.text,
                "annotation": turn.annotation.to_dict() if turn.annotation else None,
            }
            for turn in session.history
        ],
        "traces": [t.to_dict(tokenizer) for t in session.traces],
        "pending": session.pending is not None,
    }


def create_app(engine: ChatEngine, cors_origins: list[str] | None = None) -> FastAPI:
    app = FastAPI(title="semchat service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins or ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(ServiceError)
    async def _service_error(_req: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.status,
            content={"error": {"code": exc.code, "message": str(exc)}},
        )

    @app.exception_handler(RequestValidationError)
    async def _validation_error(_req: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=400,
            content={"error": {"code": "validation_error", "message": str(exc.errors())}},
        )

    @app.get("/policy")
    def get_policy():
        return engine.default_policy.to_dict()

    @app.post("/sessions")
    def create_session(body: dict | None = None):
        body = body or {}
        policy = None
        if "policy" in body and body["policy"] is not None:
            try:
                policy = DecodingPolicy.from_dict(body["policy"])
            except (KeyError, TypeError, ValueError) as exc:
                raise BadRequestError(f"bad policy: {exc}") from exc
        session = engine.create_session(policy=policy, context=body.get("context", ""))
        return {"session_id": session.session_id, "policy": session.policy.to_dict()}

    @app.post("/sessions/{session_id}/message")
    def post_message(session_id: str, body: dict):
        text = body.get("text")
        if not isinstance(text, str):
            raise BadRequestError("body must carry a string 'text'")
        pending = engine.post_user_message(session_id, text)
        tokenizer = engine.linearizer.tokenizer
        return {
            "understood": pending.understood.to_dict() if pending.understood else None,
            "understood_valid": pending.understood_valid,
            "proposed_plan": pending.planned.to_dict() if pending.planned else None,
            "proposed_plan_valid": pending.planned_valid,
            "spans": {
                "understanding": [tokenizer.surface(t) for t in pending.understood_raw],
                "planning": [tokenizer.surface(t) for t in pending.planned_raw],
            },
        }

    @app.post("/sessions/{session_id}/generate")
    def generate(session_id: str, body: dict | None = None):
        body = body or {}
        override = None
        if body.get("plan_override") is not None:
            override = annotation_from_payload(body["plan_override"])
        seed = body.get("seed")
        if seed is not None and not isinstance(seed, int):
            raise BadRequestError("seed must be an integer")
        regenerate = bool(body.get("regenerate", False))
        trace = engine.generate(
            session_id, plan_override=override, seed=seed, regenerate=regenerate
        )
        return trace.to_dict(engine.linearizer.tokenizer)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str):
        session = engine.get_session(session_id)
        return _session_view(session, engine.linearizer)

    return app
