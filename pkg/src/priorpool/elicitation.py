"""Workshop state machine: sessions, experts, two survey rounds, boxplots.

A session walks forward through CREATED -> ROUND1_OPEN -> DISCUSSION ->
ROUND2_OPEN -> CLOSED.  Experts submit one (lower, mode, upper) triplet per
arm per round; resubmission replaces the earlier entry.  During the
discussion phase the facilitator shows deidentified per-expert boxplots
computed from the fitted betas.
"""

from __future__ import annotations

import datetime as _dt
import json
import random
from dataclasses import dataclass, field
from enum import Enum

from .distfit import (
    BetaParams,
    ElicitedTriplet,
    beta_quantile,
    fit_beta_from_triplet,
)
from .errors import SchemaError, ToolkitError

__all__ = [
    "Arm",
    "SessionState",
    "ExpertProfile",
    "Submission",
    "BoxplotSummary",
    "WorkshopSession",
    "SessionStore",
    "IdExists",
    "DuplicateExpert",
    "SessionClosed",
    "WrongRoundState",
    "UnknownExpert",
    "InvalidTriplet",
    "AlreadyClosed",
    "NoSubmissions",
    "UnknownSession",
    "export_session",
    "import_session",
]

SCHEMA_VERSION = 1


class IdExists(ToolkitError):
    pass


class DuplicateExpert(ToolkitError):
    pass


class SessionClosed(ToolkitError):
    pass


class WrongRoundState(ToolkitError):
    pass


class UnknownExpert(ToolkitError):
    pass


# A submission with a bad triplet fails at ElicitedTriplet construction;
# surfaced under the elicitation-level name as well.
from .distfit import DegenerateTriplet as InvalidTriplet  # noqa: E402


class AlreadyClosed(ToolkitError):
    pass


class NoSubmissions(ToolkitError):
    pass


class UnknownSession(ToolkitError):
    pass


class Arm(Enum):
    """The two dose arms; HIGH carries p1, LOW carries p2."""

    HIGH_DOSE = "high"
    LOW_DOSE = "low"


class SessionState(Enum):
    CREATED = "CREATED"
    ROUND1_OPEN = "ROUND1_OPEN"
    DISCUSSION = "DISCUSSION"
    ROUND2_OPEN = "ROUND2_OPEN"
    CLOSED = "CLOSED"

    @property
    def order(self) -> int:
        return _STATE_ORDER[self]


_STATE_ORDER = {s: i for i, s in enumerate(SessionState)}
_STATE_NEXT = {
    SessionState.CREATED: SessionState.ROUND1_OPEN,
    SessionState.ROUND1_OPEN: SessionState.DISCUSSION,
    SessionState.DISCUSSION: SessionState.ROUND2_OPEN,
    SessionState.ROUND2_OPEN: SessionState.CLOSED,
}
_ROUND_STATE = {1: SessionState.ROUND1_OPEN, 2: SessionState.ROUND2_OPEN}


@dataclass(frozen=True)
class ExpertProfile:
    """Professional-experience survey record for one expert."""

    expert_id: str
    country: str
    years_practice_band: str
    prescribed_060_last_year: bool
    prescribed_015_last_year: bool
    max_dose_mg: float
    trained_trials: bool
    trained_stats: bool

    def __post_init__(self):
        if not self.expert_id:
            raise SchemaError("expert_id must be nonempty")
        if self.max_dose_mg < 0:
            raise SchemaError("max_dose_mg must be nonnegative")
        band_midpoint(self.years_practice_band)  # validates the band format


def band_midpoint(band: str) -> float:
    """Midpoint of a 'lo-hi' years-practiced band, e.g. '11-15' -> 13."""
    try:
        lo, hi = band.split("-")
        lo_v, hi_v = float(lo), float(hi)
    except ValueError as exc:
        raise SchemaError(f"years_practice_band must look like '11-15', got {band!r}") from exc
    if hi_v < lo_v:
        raise SchemaError(f"band upper bound below lower bound: {band!r}")
    return (lo_v + hi_v) / 2.0


@dataclass(frozen=True)
class Submission:
    expert_id: str
    round: int
    arm: Arm
    triplet: ElicitedTriplet
    fitted: BetaParams
    submitted_at: _dt.datetime


@dataclass(frozen=True)
class BoxplotSummary:
    """Deidentified five-number summary from one expert's fitted beta."""

    label: str
    whisker_low: float
    q25: float
    median: float
    q75: float
    whisker_high: float

    def __post_init__(self):
        points = (self.whisker_low, self.q25, self.median, self.q75, self.whisker_high)
        if any(a > b for a, b in zip(points, points[1:])):
            raise ValueError(f"boxplot summary out of order: {points}")


_ALIAS_ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


def _alias(i: int) -> str:
    # A..Z, then AA, AB, ... for sessions larger than the alphabet
    out = ""
    i += 1
    while i > 0:
        i, rem = divmod(i - 1, 26)
        out = _ALIAS_ALPHABET[rem] + out
    return out


@dataclass
class WorkshopSession:
    """Mutable workshop session; callers serialize mutations per session."""

    session_id: str
    state: SessionState = SessionState.CREATED
    experts: dict[str, ExpertProfile] = field(default_factory=dict)
    submissions: dict[tuple[str, int, Arm], Submission] = field(default_factory=dict)
    aliases: dict[str, str] = field(default_factory=dict)
    alias_seed: int | None = None

    def register_expert(self, profile: ExpertProfile) -> None:
        if self.state not in (SessionState.CREATED, SessionState.ROUND1_OPEN):
            raise SessionClosed(
                f"registration allowed only before discussion, state is {self.state.value}"
            )
        if profile.expert_id in self.experts:
            raise DuplicateExpert(f"expert {profile.expert_id!r} already registered")
        self.experts[profile.expert_id] = profile

    def submit(
        self,
        expert_id: str,
        round: int,
        arm: Arm,
        triplet: ElicitedTriplet,
        now: _dt.datetime | None = None,
    ) -> Submission:
        if round not in _ROUND_STATE:
            raise WrongRoundState(f"round must be 1 or 2, got {round}")
        if self.state is not _ROUND_STATE[round]:
            raise WrongRoundState(
                f"round {round} submissions need state {_ROUND_STATE[round].value}, "
                f"session is {self.state.value}"
            )
        if expert_id not in self.experts:
            raise UnknownExpert(f"expert {expert_id!r} is not registered")
        fit = fit_beta_from_triplet(triplet)
        sub = Submission(
            expert_id=expert_id,
            round=round,
            arm=arm,
            triplet=triplet,
            fitted=fit.params,
            submitted_at=now or _dt.datetime.now(_dt.timezone.utc),
        )
        self.submissions[(expert_id, round, arm)] = sub  # last write wins
        return sub

    def advance(self) -> SessionState:
        if self.state is SessionState.CLOSED:
            raise AlreadyClosed(f"session {self.session_id!r} is closed")
        self.state = _STATE_NEXT[self.state]
        return self.state

    def round_submissions(self, round: int, arm: Arm) -> list[Submission]:
        return sorted(
            (s for (eid, r, a), s in self.submissions.items() if r == round and a == arm),
            key=lambda s: s.expert_id,
        )

    def effective_round2(self, arm: Arm) -> list[Submission]:
        """Round-2 submissions, falling back to round 1 for absent experts.

        The carry-over keeps every participating expert in the aggregate when
        someone misses the second round.
        """
        out = {}
        for (eid, r, a), s in self.submissions.items():
            if a is not arm:
                continue
            if r == 2 or (eid, 2, arm) not in self.submissions:
                out[eid] = s
        return [out[k] for k in sorted(out)]

    def _ensure_aliases(self) -> None:
        # One random permutation per session, drawn at first boxplot render
        # and frozen so experts can track their own box across rounds.
        missing = [eid for eid in sorted(self.experts) if eid not in self.aliases]
        if not missing and self.aliases:
            return
        if self.alias_seed is None:
            self.alias_seed = random.SystemRandom().randrange(2**31)
        order = sorted(self.experts)
        random.Random(self.alias_seed).shuffle(order)
        self.aliases = {eid: _alias(i) for i, eid in enumerate(order)}

    def boxplots(self, round: int, arm: Arm) -> list[BoxplotSummary]:
        need = SessionState.DISCUSSION if round == 1 else SessionState.ROUND2_OPEN
        if self.state.order < need.order:
            raise WrongRoundState(
                f"round {round} boxplots available from {need.value} onward, "
                f"session is {self.state.value}"
            )
        subs = self.round_submissions(round, arm)
        if not subs:
            raise NoSubmissions(f"no round {round} submissions for arm {arm.value}")
        self._ensure_aliases()
        out = []
        for s in subs:
            q = beta_quantile(s.fitted, [0.025, 0.25, 0.5, 0.75, 0.975])
            out.append(
                BoxplotSummary(
                    label=self.aliases[s.expert_id],
                    whisker_low=float(q[0]),
                    q25=float(q[1]),
                    median=float(q[2]),
                    q75=float(q[3]),
                    whisker_high=float(q[4]),
                )
            )
        return sorted(out, key=lambda b: (len(b.label), b.label))


class SessionStore:
    """In-memory registry keyed by session id."""

    def __init__(self):
        self._sessions: dict[str, WorkshopSession] = {}

    def create(self, session_id: str) -> WorkshopSession:
        if session_id in self._sessions:
            raise IdExists(f"session {session_id!r} already exists")
        session = WorkshopSession(session_id=session_id)
        self._sessions[session_id] = session
        return session

    def get(self, session_id: str) -> WorkshopSession:
        try:
            return self._sessions[session_id]
        except KeyError:
            raise UnknownSession(f"no session {session_id!r}") from None

    def put(self, session: WorkshopSession) -> None:
        self._sessions[session.session_id] = session

    def __contains__(self, session_id: str) -> bool:
        return session_id in self._sessions

    def ids(self) -> list[str]:
        return sorted(self._sessions)


def _profile_to_doc(p: ExpertProfile) -> dict:
    return {
        "expert_id": p.expert_id,
        "country": p.country,
        "years_practice_band": p.years_practice_band,
        "prescribed_060_last_year": p.prescribed_060_last_year,
        "prescribed_015_last_year": p.prescribed_015_last_year,
        "max_dose_mg": p.max_dose_mg,
        "trained_trials": p.trained_trials,
        "trained_stats": p.trained_stats,
    }


def _profile_from_doc(d: dict) -> ExpertProfile:
    try:
        return ExpertProfile(
            expert_id=str(d["expert_id"]),
            country=str(d["country"]),
            years_practice_band=str(d["years_practice_band"]),
            prescribed_060_last_year=bool(d["prescribed_060_last_year"]),
            prescribed_015_last_year=bool(d["prescribed_015_last_year"]),
            max_dose_mg=float(d["max_dose_mg"]),
            trained_trials=bool(d["trained_trials"]),
            trained_stats=bool(d["trained_stats"]),
        )
    except KeyError as exc:
        raise SchemaError(f"expert record missing field {exc}") from None


def _submission_to_doc(s: Submission) -> dict:
    return {
        "expert_id": s.expert_id,
        "round": s.round,
        "arm": s.arm.value,
        "triplet": {"lower": s.triplet.lower, "mode": s.triplet.mode, "upper": s.triplet.upper},
        "fitted": {"alpha": s.fitted.alpha, "beta": s.fitted.beta},
        "submitted_at": s.submitted_at.isoformat(),
    }


def _submission_from_doc(d: dict) -> Submission:
    try:
        triplet = ElicitedTriplet(
            lower=float(d["triplet"]["lower"]),
            mode=float(d["triplet"]["mode"]),
            upper=float(d["triplet"]["upper"]),
        )
        return Submission(
            expert_id=str(d["expert_id"]),
            round=int(d["round"]),
            arm=Arm(d["arm"]),
            triplet=triplet,
            fitted=BetaParams(alpha=float(d["fitted"]["alpha"]), beta=float(d["fitted"]["beta"])),
            submitted_at=_dt.datetime.fromisoformat(d["submitted_at"]),
        )
    except (KeyError, ValueError, TypeError) as exc:
        if isinstance(exc, ToolkitError):
            raise
        raise SchemaError(f"malformed submission record: {exc}") from None


def export_session(session: WorkshopSession) -> dict:
    """Versioned JSON-ready document; import_session inverts it losslessly."""
    return {
        "schema_version": SCHEMA_VERSION,
        "session_id": session.session_id,
        "state": session.state.value,
        "experts": [_profile_to_doc(session.experts[k]) for k in sorted(session.experts)],
        "submissions": [
            _submission_to_doc(session.submissions[k]) for k in sorted(session.submissions, key=lambda t: (t[0], t[1], t[2].value))
        ],
        "aliases": dict(sorted(session.aliases.items())),
        "alias_seed": session.alias_seed,
    }


def import_session(document) -> WorkshopSession:
    """Rebuild a session from an exported document (dict or JSON text)."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"document is not valid JSON: {exc}") from None
    if not isinstance(document, dict):
        raise SchemaError("session document must be a JSON object")
    if document.get("schema_version") != SCHEMA_VERSION:
        raise SchemaError(
            f"unsupported schema_version {document.get('schema_version')!r}"
        )
    try:
        state = SessionState(document["state"])
        session = WorkshopSession(session_id=str(document["session_id"]), state=state)
        for pd in document["experts"]:
            session.experts[pd["expert_id"]] = _profile_from_doc(pd)
        for sd in document["submissions"]:
            sub = _submission_from_doc(sd)
            session.submissions[(sub.expert_id, sub.round, sub.arm)] = sub
        session.aliases = {str(k): str(v) for k, v in document.get("aliases", {}).items()}
        session.alias_seed = document.get("alias_seed")
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ToolkitError):
            raise
        raise SchemaError(f"malformed session document: {exc}") from None
    return session
