"""Live advisor HTTP service.

Sessions accumulate match reports and serve gated Stay/Switch advice from
the frozen pipeline models.  Advice is a pure function of the session's
match list and the loaded models: the encoder windows, EMA user vector,
subtype label and fusion scores are all recomputed from scratch per request,
so replaying the same reports into a fresh session yields the identical
recommendation.

Sessions persist as append-only JSONL files (one line per reported match)
and are rebuilt on startup.  Mutation within one session is serialized by a
per-session lock; requests across sessions proceed concurrently.
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass, field as dc_field
from typing import Literal

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .encoder import PlayerArrays
from .matchlog import (DECK_SIZE, SUPPORTED_MODES, MatchRecord, PlayerHistory,
                       WindowSpan, deck_avg_elixir)
from .pipeline import Artifacts, advise, load_artifacts
from .subtype import assign_subtypes, behavior_profile

MIN_PROFILE_MATCHES = 20
PROVISIONAL_SUBTYPE = 2   # most common label among forwarded players
DEFAULT_EPOCH = 1_700_000_000

PROVENANCE_TEXT = {
    "persona_gate": ("held by PersonaGate: your consistency profile "
                     "outperforms switching"),
    "timing_gate": ("held by TimingGate: this stretch does not look like a "
                    "favorable moment to switch"),
    "no_candidates": ("held by ScoreFusion: no well-supported switch target "
                      "clears the quality bar"),
    "fusion": "switch recommended by ScoreFusion",
    "insufficient_history": "not enough matches to build a window yet",
}


class MatchPayload(BaseModel):
    deck: list[str] = Field(min_length=DECK_SIZE, max_length=DECK_SIZE)
    outcome: Literal["win", "loss"]
    crown_diff: int = Field(ge=-3, le=3)
    mode: str = "pvp"
    timestamp: int | None = None


def payload_field_errors(payload: MatchPayload, catalog) -> list[dict]:
    """Catalog- and consistency-level checks beyond the schema shape."""
    errors = []
    if len(set(payload.deck)) != DECK_SIZE:
        errors.append({"loc": ["body", "deck"],
                       "msg": f"deck must list {DECK_SIZE} distinct card ids",
                       "type": "value_error"})
    else:
        unknown = [c for c in payload.deck if c not in catalog]
        if unknown:
            errors.append({"loc": ["body", "deck"],
                           "msg": f"unknown card ids: {', '.join(unknown)}",
                           "type": "value_error"})
    if payload.crown_diff == 0:
        errors.append({"loc": ["body", "crown_diff"],
                       "msg": "crown_diff 0 (ties are rejected)",
                       "type": "value_error"})
    elif payload.outcome == "win" and payload.crown_diff < 1:
        errors.append({"loc": ["body", "crown_diff"],
                       "msg": "win requires crown_diff >= 1",
                       "type": "value_error"})
    elif payload.outcome == "loss" and payload.crown_diff > -1:
        errors.append({"loc": ["body", "crown_diff"],
                       "msg": "loss requires crown_diff <= -1",
                       "type": "value_error"})
    if payload.mode not in SUPPORTED_MODES:
        errors.append({"loc": ["body", "mode"],
                       "msg": f"unsupported mode {payload.mode!r}",
                       "type": "value_error"})
    return errors


@dataclass
class Session:
    session_id: str
    matches: list[MatchRecord] = dc_field(default_factory=list)
    last_advice: dict | None = None
    lock: threading.Lock = dc_field(default_factory=threading.Lock)

    def next_timestamp(self, requested: int | None) -> int:
        if requested is not None:
            return requested
        if self.matches:
            return self.matches[-1].timestamp + 60
        return DEFAULT_EPOCH


def session_subtype(artifacts: Artifacts, session_id: str,
                    matches: list[MatchRecord]) -> tuple[int, bool]:
    """Cached-label rule: a real profile needs MIN_PROFILE_MATCHES matches;
    below that the population-prior label applies, flagged provisional."""
    if len(matches) < MIN_PROFILE_MATCHES:
        return PROVISIONAL_SUBTYPE, True
    profile = behavior_profile(session_id, matches)
    labels = assign_subtypes(artifacts.subtype, [profile])
    return labels[session_id], False


def session_advice(artifacts: Artifacts, session_id: str,
                   matches: list[MatchRecord]) -> dict:
    """Pure advice computation; the HTTP layer only adds bookkeeping."""
    k = artifacts.encoder.config.k
    n = len(matches)
    if n < k:
        return {
            "decision": None,
            "target_state": None,
            "target_name": None,
            "gate_prob": None,
            "candidates": [],
            "provenance": "insufficient_history",
            "explanation": PROVENANCE_TEXT["insufficient_history"],
            "need_matches": k - n,
            "match_count": n,
            "subtype": None,
            "subtype_provisional": True,
        }
    subtype, provisional = session_subtype(artifacts, session_id, matches)

    # pad with a throwaway copy of the last match so the current window's
    # (unplayed) target index stays in bounds; targets are never read here
    last = matches[-1]
    dummy = MatchRecord(player_id=last.player_id, seq_index=last.seq_index + 1,
                        timestamp=last.timestamp + 60, deck=last.deck,
                        avg_elixir=last.avg_elixir, outcome="win",
                        crown_diff=1, mode=last.mode)
    history = PlayerHistory(player_id=session_id, matches=matches + [dummy])
    deck_states = artifacts.archetype.assign_decks(
        [m.deck for m in history.matches], artifacts.catalog)
    arrays = PlayerArrays.from_history(history, deck_states,
                                       artifacts.encoder.card_vocab, subtype)
    spans = [WindowSpan(session_id, i, k, "live") for i in range(n - k + 1)]
    zc, zu, mf = artifacts.encoder.encode_player(arrays, spans)
    from_state = deck_states[last.deck]
    rec = advise(artifacts, subtype, from_state, zc[-1], zu[-1], mf[-1])

    states = artifacts.archetype.states
    explanation = PROVENANCE_TEXT[rec.provenance]
    if rec.decision == "switch":
        explanation = (f"switch to {states[rec.target].name}: best fused "
                       f"score among {len(rec.candidates)} candidates")
    return {
        "decision": rec.decision,
        "target_state": rec.target,
        "target_name": states[rec.target].name if rec.target is not None else None,
        "gate_prob": rec.gate_prob,
        "candidates": [{
            "to_state": c.to_state,
            "name": states[c.to_state].name,
            "adoptability": c.adoptability,
            "norm_adopt": c.norm_adopt,
            "quality": c.y_tq,
            "fused": c.fused,
        } for c in rec.candidates],
        "provenance": rec.provenance,
        "explanation": explanation,
        "need_matches": 0,
        "match_count": n,
        "subtype": subtype,
        "subtype_provisional": provisional,
        "from_state": from_state,
        "from_name": states[from_state].name,
    }


class AdvisorState:
    def __init__(self, artifacts: Artifacts | None, sessions_dir=None):
        self.artifacts = artifacts
        self.sessions_dir = sessions_dir
        self.sessions: dict[str, Session] = {}
        self.registry_lock = threading.Lock()
        if sessions_dir:
            os.makedirs(sessions_dir, exist_ok=True)
            self._replay()

    def _log_path(self, session_id: str) -> str:
        return os.path.join(self.sessions_dir, f"{session_id}.jsonl")

    def _replay(self) -> None:
        for name in sorted(os.listdir(self.sessions_dir)):
            if not name.endswith(".jsonl"):
                continue
            session = Session(session_id=name[:-len(".jsonl")])
            with open(os.path.join(self.sessions_dir, name),
                      encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        self._append(session, json.loads(line), persist=False)
            self.sessions[session.session_id] = session

    def create(self) -> Session:
        session = Session(session_id=uuid.uuid4().hex)
        with self.registry_lock:
            self.sessions[session.session_id] = session
        if self.sessions_dir:
            open(self._log_path(session.session_id), "a").close()
        return session

    def get(self, session_id: str) -> Session:
        with self.registry_lock:
            session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown session {session_id!r}")
        return session

    def _append(self, session: Session, record: dict, persist: bool) -> None:
        deck = tuple(sorted(record["deck"]))
        session.matches.append(MatchRecord(
            player_id=session.session_id,
            seq_index=len(session.matches),
            timestamp=record["timestamp"],
            deck=deck,
            avg_elixir=deck_avg_elixir(deck, self.artifacts.catalog),
            outcome=record["outcome"],
            crown_diff=record["crown_diff"],
            mode=record["mode"],
        ))
        if persist and self.sessions_dir:
            with open(self._log_path(session.session_id), "a",
                      encoding="utf-8") as fh:
                fh.write(json.dumps(record) + "\n")

    def report(self, session: Session, payload: MatchPayload) -> int:
        with session.lock:
            record = {
                "timestamp": session.next_timestamp(payload.timestamp),
                "deck": list(payload.deck),
                "outcome": payload.outcome,
                "crown_diff": payload.crown_diff,
                "mode": payload.mode,
            }
            self._append(session, record, persist=True)
            return len(session.matches)


def create_app(models_dir=None, sessions_dir=None,
               artifacts: Artifacts | None = None) -> FastAPI:
    """models_dir=None starts the service without models; state-changing
    endpoints then answer 503 until it is restarted with models."""
    if artifacts is None and models_dir is not None:
        artifacts = load_artifacts(models_dir)
    state = AdvisorState(artifacts, sessions_dir)
    app = FastAPI(title="switch advisor")
    # the browser client is served from a separate static origin
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    app.state.advisor = state

    def require_models() -> Artifacts:
        if state.artifacts is None:
            raise HTTPException(status_code=503, detail="models not loaded")
        return state.artifacts

    @app.get("/health")
    def health():
        return {"status": "ok" if state.artifacts is not None else "degraded",
                "models_loaded": state.artifacts is not None,
                "sessions": len(state.sessions)}

    @app.post("/session")
    def create_session():
        require_models()
        session = state.create()
        return {"session_id": session.session_id}

    @app.get("/session/{session_id}")
    def get_session(session_id: str):
        require_models()
        session = state.get(session_id)
        with session.lock:
            matches = [{
                "timestamp": m.timestamp,
                "deck": list(m.deck),
                "outcome": m.outcome,
                "crown_diff": m.crown_diff,
                "mode": m.mode,
            } for m in session.matches]
            subtype, provisional = (
                session_subtype(state.artifacts, session_id, session.matches)
                if session.matches else (None, True))
            return {"session_id": session_id,
                    "match_count": len(matches),
                    "matches": matches,
                    "subtype": subtype,
                    "subtype_provisional": provisional,
                    "last_advice": session.last_advice}

    @app.post("/session/{session_id}/match")
    def report_match(session_id: str, payload: MatchPayload):
        artifacts = require_models()
        session = state.get(session_id)
        errors = payload_field_errors(payload, artifacts.catalog)
        if errors:
            raise HTTPException(status_code=422, detail=errors)
        count = state.report(session, payload)
        return {"ok": True, "match_count": count}

    @app.get("/session/{session_id}/advice")
    def get_advice(session_id: str):
        artifacts = require_models()
        session = state.get(session_id)
        with session.lock:
            advice = session_advice(artifacts, session_id,
                                    list(session.matches))
            session.last_advice = advice
        return advice

    return app
