"""HTTP facade for live workshops.

Facilitators create sessions, register experts (receiving per-expert
tokens), advance rounds with an expected-state guard, and read deidentified
boxplots; experts preview triplet fits live and submit per arm and round.
All payloads are JSON with a schema_version field; probabilities travel on
the [0, 1] scale.

Persistence is an append-only JSON-lines journal per session plus a full
snapshot written on every state advance; on startup the newest snapshot is
loaded and the journal tail replayed, so a crashed workshop resumes where
it stopped.
"""

from __future__ import annotations

import hashlib
import hmac
import json
import os
import threading
from pathlib import Path

from fastapi import Depends, FastAPI, Header, HTTPException, Query
from pydantic import BaseModel, Field

from . import distfit
from .distfit import CiLevel, DegenerateTriplet, ElicitedTriplet, fit_beta_from_triplet
from .elicitation import (
    SCHEMA_VERSION,
    AlreadyClosed,
    Arm,
    DuplicateExpert,
    ExpertProfile,
    NoSubmissions,
    SessionState,
    SessionStore,
    UnknownExpert,
    UnknownSession,
    WorkshopSession,
    WrongRoundState,
    export_session,
    import_session,
)
from .errors import SchemaError

__all__ = ["ServiceConfig", "WorkshopService", "create_app"]

_PREVIEW_GRID_POINTS = 201


class ServiceConfig:
    def __init__(self, data_dir: str | os.PathLike, token_secret: str):
        self.data_dir = Path(data_dir)
        self.token_secret = token_secret


def _digest(secret: str, *parts: str) -> str:
    mac = hmac.new(secret.encode(), b"\x1f".join(p.encode() for p in parts), hashlib.sha256)
    return mac.hexdigest()[:32]


class WorkshopService:
    """Session registry with per-session write locks and journaling."""

    def __init__(self, config: ServiceConfig):
        self.config = config
        self.store = SessionStore()
        self._locks: dict[str, threading.RLock] = {}
        self._registry_lock = threading.RLock()
        self.config.data_dir.mkdir(parents=True, exist_ok=True)
        self._load_existing()

    # -- tokens ------------------------------------------------------------

    @property
    def facilitator_token(self) -> str:
        return _digest(self.config.token_secret, "facilitator")

    def expert_token(self, session_id: str, expert_id: str) -> str:
        return _digest(self.config.token_secret, "expert", session_id, expert_id)

    def is_expert_token(self, session_id: str, token: str) -> str | None:
        """Return the expert_id owning this token in this session, if any."""
        session = self.store.get(session_id)
        for expert_id in session.experts:
            if hmac.compare_digest(self.expert_token(session_id, expert_id), token):
                return expert_id
        return None

    def any_valid_token(self, token: str) -> bool:
        if hmac.compare_digest(self.facilitator_token, token):
            return True
        for sid in self.store.ids():
            if self.is_expert_token(sid, token):
                return True
        return False

    # -- persistence -------------------------------------------------------

    def _journal_path(self, session_id: str) -> Path:
        return self.config.data_dir / f"{session_id}.journal.jsonl"

    def _snapshot_path(self, session_id: str) -> Path:
        return self.config.data_dir / f"{session_id}.snapshot.json"

    def _append_journal(self, session_id: str, event: dict) -> None:
        with open(self._journal_path(session_id), "a") as fh:
            fh.write(json.dumps(event) + "\n")

    def _write_snapshot(self, session: WorkshopSession) -> None:
        doc = export_session(session)
        path = self._snapshot_path(session.session_id)
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w") as fh:
            json.dump(doc, fh)
        tmp.replace(path)
        # journal restarts relative to the new snapshot
        self._journal_path(session.session_id).unlink(missing_ok=True)

    def _load_existing(self) -> None:
        for snap in sorted(self.config.data_dir.glob("*.snapshot.json")):
            with open(snap) as fh:
                session = import_session(json.load(fh))
            self.store.put(session)
        for journal in sorted(self.config.data_dir.glob("*.journal.jsonl")):
            session_id = journal.name.removesuffix(".journal.jsonl")
            if session_id not in self.store:
                self.store.put(WorkshopSession(session_id=session_id))
            session = self.store.get(session_id)
            with open(journal) as fh:
                for line in fh:
                    if line.strip():
                        self._replay(session, json.loads(line))

    def _replay(self, session: WorkshopSession, event: dict) -> None:
        # Journal events are trusted: state checks already ran when the
        # event was accepted, so replay writes records directly.
        import datetime as _dt

        from .elicitation import Submission

        kind = event["event"]
        if kind == "expert_registered":
            profile = ExpertProfile(**event["profile"])
            session.experts.setdefault(profile.expert_id, profile)
        elif kind == "submission":
            triplet = ElicitedTriplet(**event["triplet"])
            arm = Arm(event["arm"])
            fit = fit_beta_from_triplet(triplet)
            session.submissions[(event["expert_id"], event["round"], arm)] = Submission(
                expert_id=event["expert_id"],
                round=event["round"],
                arm=arm,
                triplet=triplet,
                fitted=fit.params,
                submitted_at=_dt.datetime.fromisoformat(event["submitted_at"]),
            )
        elif kind == "advanced":
            session.state = SessionState(event["state"])

    # -- locking -----------------------------------------------------------

    def lock(self, session_id: str) -> threading.RLock:
        with self._registry_lock:
            return self._locks.setdefault(session_id, threading.RLock())


class _CreateSessionBody(BaseModel):
    schema_version: int = SCHEMA_VERSION
    session_id: str | None = None


class _ProfileBody(BaseModel):
    schema_version: int = SCHEMA_VERSION
    expert_id: str
    country: str
    years_practice_band: str
    prescribed_060_last_year: bool
    prescribed_015_last_year: bool
    max_dose_mg: float = Field(ge=0)
    trained_trials: bool
    trained_stats: bool


class _SubmissionBody(BaseModel):
    schema_version: int = SCHEMA_VERSION
    round: int
    arm: str
    lower: float
    mode: float
    upper: float


class _AdvanceBody(BaseModel):
    schema_version: int = SCHEMA_VERSION
    expected_state: str


def _http_error(status: int, error: str, message: str, **extra) -> HTTPException:
    return HTTPException(
        status_code=status,
        detail={"schema_version": SCHEMA_VERSION, "error": error, "message": message, **extra},
    )


def create_app(service: WorkshopService) -> FastAPI:
    app = FastAPI(title="priorpool workshop service")

    def bearer(authorization: str = Header(default="")) -> str:
        if authorization.startswith("Bearer "):
            return authorization.removeprefix("Bearer ").strip()
        return authorization.strip()

    def require_facilitator(token: str = Depends(bearer)) -> str:
        if not hmac.compare_digest(service.facilitator_token, token):
            raise _http_error(401, "InvalidToken", "facilitator token required")
        return token

    def get_session(session_id: str) -> WorkshopSession:
        try:
            return service.store.get(session_id)
        except UnknownSession:
            raise _http_error(404, "UnknownSession", f"no session {session_id!r}") from None

    def descriptor(session: WorkshopSession) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "session_id": session.session_id,
            "state": session.state.value,
            "experts": len(session.experts),
            "submissions": len(session.submissions),
        }

    @app.post("/sessions", status_code=201)
    def create_session(body: _CreateSessionBody, _: str = Depends(require_facilitator)):
        import uuid

        session_id = body.session_id or uuid.uuid4().hex[:12]
        with service._registry_lock:
            if session_id in service.store:
                # idempotent retry: same body yields the same descriptor
                return descriptor(service.store.get(session_id))
            session = service.store.create(session_id)
            service._append_journal(session_id, {"event": "created"})
        return descriptor(session)

    @app.get("/sessions/{session_id}")
    def get_descriptor(session_id: str, token: str = Depends(bearer)):
        session = get_session(session_id)
        if not (
            hmac.compare_digest(service.facilitator_token, token)
            or service.is_expert_token(session_id, token)
        ):
            raise _http_error(401, "InvalidToken", "token not valid for this session")
        return descriptor(session)

    @app.post("/sessions/{session_id}/experts", status_code=201)
    def register_expert(
        session_id: str, body: _ProfileBody, _: str = Depends(require_facilitator)
    ):
        session = get_session(session_id)
        profile = ExpertProfile(
            expert_id=body.expert_id,
            country=body.country,
            years_practice_band=body.years_practice_band,
            prescribed_060_last_year=body.prescribed_060_last_year,
            prescribed_015_last_year=body.prescribed_015_last_year,
            max_dose_mg=body.max_dose_mg,
            trained_trials=body.trained_trials,
            trained_stats=body.trained_stats,
        )
        with service.lock(session_id):
            existing = session.experts.get(body.expert_id)
            if existing is None:
                try:
                    session.register_expert(profile)
                except DuplicateExpert as exc:
                    raise _http_error(409, "DuplicateExpert", str(exc)) from None
                except Exception as exc:
                    raise _http_error(409, type(exc).__name__, str(exc)) from None
                service._append_journal(
                    session_id,
                    {"event": "expert_registered", "profile": profile.__dict__},
                )
            elif existing != profile:
                raise _http_error(
                    409,
                    "DuplicateExpert",
                    f"expert {body.expert_id!r} already registered with a different profile",
                )
        return {
            "schema_version": SCHEMA_VERSION,
            "expert_id": body.expert_id,
            "token": service.expert_token(session_id, body.expert_id),
        }

    @app.get("/preview")
    def preview(
        lower: float = Query(...),
        mode: float = Query(...),
        upper: float = Query(...),
        ci: float = Query(default=0.95),
        token: str = Depends(bearer),
    ):
        if not service.any_valid_token(token):
            raise _http_error(401, "InvalidToken", "a session token is required")
        try:
            triplet = ElicitedTriplet(lower=lower, mode=mode, upper=upper)
            fit = fit_beta_from_triplet(triplet, CiLevel(ci))
        except DegenerateTriplet as exc:
            raise _http_error(
                422,
                "InvalidTriplet",
                str(exc),
                invariant="0 <= lower < mode < upper <= 1",
            ) from None
        summary = distfit.beta_summary(fit.params)
        return {
            "schema_version": SCHEMA_VERSION,
            "beta_params": {"alpha": fit.params.alpha, "beta": fit.params.beta},
            "residuals": {"lower": fit.residual_lower, "upper": fit.residual_upper},
            "summary": {
                "mean": summary.mean,
                "sd": summary.sd,
                "mode": summary.mode,
                "median": summary.median,
            },
            "density_grid": distfit.density_grid(fit.params, _PREVIEW_GRID_POINTS),
        }

    @app.post("/sessions/{session_id}/submissions")
    def submit(session_id: str, body: _SubmissionBody, token: str = Depends(bearer)):
        session = get_session(session_id)
        expert_id = service.is_expert_token(session_id, token)
        if expert_id is None:
            raise _http_error(401, "InvalidToken", "expert token required")
        try:
            arm = Arm(body.arm)
        except ValueError:
            raise _http_error(
                422, "InvalidArm", f"arm must be one of {[a.value for a in Arm]}"
            ) from None
        try:
            triplet = ElicitedTriplet(lower=body.lower, mode=body.mode, upper=body.upper)
        except DegenerateTriplet as exc:
            raise _http_error(
                422,
                "InvalidTriplet",
                str(exc),
                invariant="0 <= lower < mode < upper <= 1",
            ) from None
        with service.lock(session_id):
            try:
                sub = session.submit(expert_id, body.round, arm, triplet)
            except WrongRoundState as exc:
                raise _http_error(409, "WrongRoundState", str(exc)) from None
            except UnknownExpert as exc:
                raise _http_error(401, "UnknownExpert", str(exc)) from None
            service._append_journal(
                session_id,
                {
                    "event": "submission",
                    "expert_id": expert_id,
                    "round": body.round,
                    "arm": arm.value,
                    "triplet": {
                        "lower": triplet.lower,
                        "mode": triplet.mode,
                        "upper": triplet.upper,
                    },
                    "submitted_at": sub.submitted_at.isoformat(),
                },
            )
        summary = distfit.beta_summary(sub.fitted)
        return {
            "schema_version": SCHEMA_VERSION,
            "expert_id": expert_id,
            "round": sub.round,
            "arm": arm.value,
            "fitted": {"alpha": sub.fitted.alpha, "beta": sub.fitted.beta},
            "summary": {
                "mean": summary.mean,
                "sd": summary.sd,
                "mode": summary.mode,
                "median": summary.median,
            },
            "submitted_at": sub.submitted_at.isoformat(),
        }

    @app.post("/sessions/{session_id}/advance")
    def advance(
        session_id: str, body: _AdvanceBody, _: str = Depends(require_facilitator)
    ):
        session = get_session(session_id)
        with service.lock(session_id):
            if session.state.value != body.expected_state:
                raise _http_error(
                    409,
                    "UnexpectedState",
                    f"session is {session.state.value}, expected {body.expected_state}",
                    state=session.state.value,
                )
            try:
                new_state = session.advance()
            except AlreadyClosed as exc:
                raise _http_error(409, "AlreadyClosed", str(exc)) from None
            service._append_journal(session_id, {"event": "advanced", "state": new_state.value})
            service._write_snapshot(session)
        return {"schema_version": SCHEMA_VERSION, "state": new_state.value}

    @app.get("/sessions/{session_id}/rounds/{round}/boxplots")
    def boxplots(
        session_id: str, round: int, arm: str = Query(...), token: str = Depends(bearer)
    ):
        session = get_session(session_id)
        if not (
            hmac.compare_digest(service.facilitator_token, token)
            or service.is_expert_token(session_id, token)
        ):
            raise _http_error(401, "InvalidToken", "token not valid for this session")
        try:
            arm_val = Arm(arm)
        except ValueError:
            raise _http_error(
                422, "InvalidArm", f"arm must be one of {[a.value for a in Arm]}"
            ) from None
        with service.lock(session_id):
            try:
                summaries = session.boxplots(round, arm_val)
            except WrongRoundState as exc:
                raise _http_error(409, "WrongRoundState", str(exc)) from None
            except NoSubmissions as exc:
                raise _http_error(404, "NoSubmissions", str(exc)) from None
        return {
            "schema_version": SCHEMA_VERSION,
            "round": round,
            "arm": arm_val.value,
            "boxplots": [
                {
                    "label": b.label,
                    "whisker_low": b.whisker_low,
                    "q25": b.q25,
                    "median": b.median,
                    "q75": b.q75,
                    "whisker_high": b.whisker_high,
                }
                for b in summaries
            ],
        }

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str, _: str = Depends(require_facilitator)):
        session = get_session(session_id)
        with service.lock(session_id):
            return export_session(session)

    return app
