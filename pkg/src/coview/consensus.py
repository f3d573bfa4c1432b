"""Four-stage mediated negotiation over a preference panel.

One party opens a session with their panel; the mediator walks both
parties through initial proposal, self-evaluation (reasons), perspective
taking (position updates), and final proposal, bounded by an iteration
cap and a deadline. Every state change is recorded as an event, and
replaying the event log reconstructs the session exactly, transcript
included.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from importlib import resources
from typing import Mapping, Sequence

from .errors import NotFoundError, RoleError, StateError, ValidationError
from .preference import (
    PreferencePanel,
    Role,
    check_weight,
    new_panel,
    normalize_keyword,
    panel_from_doc,
    panel_to_doc,
    remove_preference,
    set_preference,
)

NO_REASON_SENTINEL = "(no reason given)"

DEFAULT_MAX_ITERATIONS = 3
DEFAULT_SESSION_TIMEOUT_MS = 600_000  # ten minutes


class InvalidRole(RoleError):
    pass


class WrongActor(RoleError):
    pass


class WrongStage(StateError):
    pass


class NotFinalized(StateError):
    pass


class EmptyModification(ValidationError):
    pass


class NoSuchConflict(NotFoundError):
    pass


class Stage(enum.Enum):
    AWAITING_INITIAL_PANEL = "awaiting_initial_panel"
    INITIAL_PROPOSAL = "initial_proposal"
    SELF_EVALUATION = "self_evaluation"
    PERSPECTIVE_TAKING = "perspective_taking"
    FINAL_PROPOSAL = "final_proposal"
    FINALIZED = "finalized"


class Outcome(enum.Enum):
    REACHED = "consensus_reached"
    FAILED = "consensus_failed"


class PositionKind(enum.Enum):
    KEEP = "keep"
    CHANGE = "change"
    DROP = "drop"


@dataclass(frozen=True)
class Position:
    kind: PositionKind
    weight: int | None = None

    def __post_init__(self):
        if self.kind is PositionKind.CHANGE:
            check_weight(self.weight)
        elif self.weight is not None:
            raise ValidationError(f"{self.kind.value} position carries no weight")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "weight": self.weight}

    @staticmethod
    def from_dict(doc: Mapping) -> "Position":
        return Position(kind=PositionKind(doc["kind"]), weight=doc.get("weight"))


def keep() -> Position:
    return Position(PositionKind.KEEP)


def change(weight: int) -> Position:
    return Position(PositionKind.CHANGE, weight)


def drop() -> Position:
    return Position(PositionKind.DROP)


def canonical_position(position: Position, baseline: int | None) -> tuple[str, int | None]:
    """Resolve Keep against the draft's state so equivalent positions compare equal."""
    if position.kind is PositionKind.KEEP:
        if baseline is None:
            return ("drop", None)
        return ("change", baseline)
    if position.kind is PositionKind.CHANGE:
        return ("change", position.weight)
    return ("drop", None)


def describe_position(position: Position, baseline: int | None) -> str:
    kind, weight = canonical_position(position, baseline)
    if kind == "drop":
        return "drop the keyword"
    return f"set weight {weight}"


@dataclass
class Conflict:
    keyword: str
    baseline: int | None  # draft weight when the conflict was opened, None = absent
    initiator_position: Position
    reviewer_position: Position
    initiator_reason: str | None = None
    reviewer_reason: str | None = None

    @property
    def resolved(self) -> bool:
        return canonical_position(self.initiator_position, self.baseline) == canonical_position(
            self.reviewer_position, self.baseline
        )

    def to_dict(self) -> dict:
        return {
            "keyword": self.keyword,
            "baseline": self.baseline,
            "initiator_position": self.initiator_position.to_dict(),
            "reviewer_position": self.reviewer_position.to_dict(),
            "initiator_reason": self.initiator_reason,
            "reviewer_reason": self.reviewer_reason,
            "resolved": self.resolved,
        }


@dataclass(frozen=True)
class MediatorMessage:
    stage: Stage
    addressee: Role
    template_id: str
    payload: Mapping[str, str]

    def to_dict(self) -> dict:
        return {
            "stage": self.stage.value,
            "addressee": self.addressee.value,
            "template_id": self.template_id,
            "payload": dict(self.payload),
        }


@dataclass(frozen=True)
class ConsensusConfig:
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    session_timeout: int = DEFAULT_SESSION_TIMEOUT_MS  # milliseconds

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1")
        if self.session_timeout <= 0:
            raise ValidationError("session_timeout must be positive")


@dataclass
class ConsensusSession:
    session_id: str
    initiator: Role
    config: ConsensusConfig
    initiator_panel: PreferencePanel
    draft_panel: PreferencePanel
    stage: Stage = Stage.AWAITING_INITIAL_PANEL
    conflicts: dict[str, Conflict] = field(default_factory=dict)
    iteration: int = 0
    outcome: Outcome | None = None
    transcript: list[MediatorMessage] = field(default_factory=list)
    started_at: int = 0
    deadline: int = 0
    co_panel: PreferencePanel | None = None
    changed_this_round: bool = False
    events: list[dict] = field(default_factory=list)

    @property
    def reviewer(self) -> Role:
        return Role.YOUTH if self.initiator is Role.PARENT else Role.PARENT

    def open_conflicts(self) -> list[Conflict]:
        return [c for c in self.conflicts.values() if not c.resolved]

    def pending_messages(self) -> dict[str, list[dict]]:
        grouped: dict[str, list[dict]] = {Role.PARENT.value: [], Role.YOUTH.value: []}
        for i, msg in enumerate(self.transcript):
            entry = msg.to_dict() | {"seq": i}
            grouped[msg.addressee.value].append(entry)
        return grouped


# --- template catalog ------------------------------------------------------


def load_template_catalog() -> dict[str, dict]:
    text = resources.files("coview.data").joinpath("consensus_templates.json").read_text("utf-8")
    return json.loads(text)


def render_message(msg: MediatorMessage, catalog: Mapping[str, Mapping] | None = None) -> str:
    catalog = catalog or load_template_catalog()
    entry = catalog[msg.template_id]
    return entry["text"].format(**msg.payload)


def _panel_text(panel: PreferencePanel) -> str:
    if not panel.entries:
        return "(empty panel)"
    return ", ".join(f"{kw}: {panel.entries[kw]}" for kw in sorted(panel.entries))


# --- event application -----------------------------------------------------
#
# Public operations validate, build an event, and feed it through _apply;
# replay_session folds a stored log through the same code path. Anything
# _apply computes must depend only on the session state and the event.


def _say(session: ConsensusSession, addressee: Role, template_id: str, payload: dict[str, str]) -> None:
    for slot, value in payload.items():
        if not str(value):
            raise ValidationError(f"template {template_id}: slot {slot} is empty")
    session.transcript.append(
        MediatorMessage(stage=session.stage, addressee=addressee, template_id=template_id, payload=payload)
    )


def _finalize(session: ConsensusSession, outcome: Outcome, at: int) -> None:
    if outcome is Outcome.REACHED and session.stage is Stage.FINAL_PROPOSAL:
        draft = session.draft_panel
        for conflict in session.conflicts.values():
            kind, weight = canonical_position(conflict.reviewer_position, conflict.baseline)
            if kind == "change":
                draft = set_preference(draft, conflict.keyword, weight, at=at)
            else:
                draft = remove_preference(draft, conflict.keyword, at=at)
        session.draft_panel = draft
    session.stage = Stage.FINALIZED
    session.outcome = outcome
    session.co_panel = PreferencePanel(
        role=Role.CO,
        entries=dict(session.draft_panel.entries),
        revision=session.draft_panel.revision,
        updated_at=at,
    )
    for addressee in (Role.PARENT, Role.YOUTH):
        _say(
            session,
            addressee,
            "session_result",
            {"outcome": session.outcome.value, "panel": _panel_text(session.co_panel)},
        )


def _cross_present(session: ConsensusSession, template_id: str) -> None:
    for conflict in session.open_conflicts():
        pairs = (
            (session.initiator, session.reviewer, conflict.reviewer_reason, conflict.reviewer_position),
            (session.reviewer, session.initiator, conflict.initiator_reason, conflict.initiator_position),
        )
        for addressee, counterpart, reason, position in pairs:
            _say(
                session,
                addressee,
                template_id,
                {
                    "keyword": conflict.keyword,
                    "counterpart": counterpart.value,
                    "counterpart_reason": reason or NO_REASON_SENTINEL,
                    "counterpart_position": describe_position(position, conflict.baseline),
                },
            )


def _apply_started(event: Mapping) -> ConsensusSession:
    payload = event["payload"]
    config = ConsensusConfig(
        max_iterations=payload["config"]["max_iterations"],
        session_timeout=payload["config"]["session_timeout"],
    )
    panel = panel_from_doc(payload["panel"])
    at = event["at"]
    session = ConsensusSession(
        session_id=payload["session_id"],
        initiator=Role(payload["initiator"]),
        config=config,
        initiator_panel=panel,
        draft_panel=panel,
        stage=Stage.INITIAL_PROPOSAL,
        started_at=at,
        deadline=at + config.session_timeout,
    )
    session.events.append(dict(event))
    _say(
        session,
        session.reviewer,
        "present_panel",
        {"initiator": session.initiator.value, "panel": _panel_text(panel)},
    )
    return session


def _apply_responded(session: ConsensusSession, event: Mapping) -> None:
    payload = event["payload"]
    at = event["at"]
    if payload["decision"] == "accept":
        _finalize(session, Outcome.REACHED, at)
        return
    for mod in payload["modifications"]:
        kw = mod["keyword"]
        position = Position.from_dict(mod["position"])
        baseline = session.draft_panel.entries.get(kw)
        session.conflicts[kw] = Conflict(
            keyword=kw,
            baseline=baseline,
            initiator_position=keep() if baseline is not None else drop(),
            reviewer_position=position,
        )
    session.stage = Stage.SELF_EVALUATION
    for conflict in session.conflicts.values():
        for addressee in (session.initiator, session.reviewer):
            _say(
                session,
                addressee,
                "request_reason",
                {
                    "keyword": conflict.keyword,
                    "initiator_position": describe_position(conflict.initiator_position, conflict.baseline),
                    "reviewer_position": describe_position(conflict.reviewer_position, conflict.baseline),
                },
            )


def _apply_reason(session: ConsensusSession, event: Mapping) -> None:
    payload = event["payload"]
    conflict = session.conflicts[payload["keyword"]]
    if Role(payload["actor"]) is session.initiator:
        conflict.initiator_reason = payload["reason"]
    else:
        conflict.reviewer_reason = payload["reason"]
    if session.stage is Stage.SELF_EVALUATION:
        pending = [
            c for c in session.open_conflicts() if c.initiator_reason is None or c.reviewer_reason is None
        ]
        if not pending:
            session.stage = Stage.PERSPECTIVE_TAKING
            session.changed_this_round = False
            _cross_present(session, "cross_present")


def _apply_position(session: ConsensusSession, event: Mapping) -> None:
    payload = event["payload"]
    conflict = session.conflicts[payload["keyword"]]
    position = Position.from_dict(payload["position"])
    if Role(payload["actor"]) is session.initiator:
        before = canonical_position(conflict.initiator_position, conflict.baseline)
        conflict.initiator_position = position
    else:
        before = canonical_position(conflict.reviewer_position, conflict.baseline)
        conflict.reviewer_position = position
    if canonical_position(position, conflict.baseline) != before:
        session.changed_this_round = True


def _apply_advanced(session: ConsensusSession, event: Mapping) -> None:
    at = event["at"]
    if at > session.deadline:
        _finalize(session, Outcome.FAILED, at)
        return
    if session.stage is Stage.PERSPECTIVE_TAKING:
        if session.changed_this_round:
            session.stage = Stage.FINAL_PROPOSAL
            return
        session.iteration += 1
        if session.iteration >= session.config.max_iterations:
            _finalize(session, Outcome.FAILED, at)
            return
        _cross_present(session, "re_present")
        return
    if session.stage is Stage.FINAL_PROPOSAL:
        if not session.open_conflicts():
            _finalize(session, Outcome.REACHED, at)
            return
        session.iteration += 1
        if session.iteration >= session.config.max_iterations:
            _finalize(session, Outcome.FAILED, at)
            return
        session.stage = Stage.PERSPECTIVE_TAKING
        session.changed_this_round = False
        _cross_present(session, "re_present")
    # InitialProposal / SelfEvaluation: still waiting on a party; no-op.


_APPLIERS = {
    "responded": _apply_responded,
    "reason": _apply_reason,
    "position": _apply_position,
    "advanced": _apply_advanced,
}


def _apply(session: ConsensusSession, event: Mapping) -> None:
    session.events.append(dict(event))
    _APPLIERS[event["kind"]](session, event)


# --- public operations -----------------------------------------------------


def start_session(
    initiator: Role,
    panel: PreferencePanel,
    cfg: ConsensusConfig = ConsensusConfig(),
    session_id: str = "session-1",
    at: int = 0,
) -> ConsensusSession:
    if initiator not in (Role.PARENT, Role.YOUTH):
        raise InvalidRole("a consensus session is opened by the parent or the youth")
    event = {
        "kind": "started",
        "actor": initiator.value,
        "at": at,
        "payload": {
            "session_id": session_id,
            "initiator": initiator.value,
            "panel": panel_to_doc(panel),
            "config": {"max_iterations": cfg.max_iterations, "session_timeout": cfg.session_timeout},
        },
    }
    return _apply_started(event)


@dataclass(frozen=True)
class Accept:
    pass


@dataclass(frozen=True)
class Modify:
    changes: tuple[tuple[str, Position], ...]


def reviewer_respond(
    session: ConsensusSession,
    actor: Role,
    decision: Accept | Modify,
    at: int | None = None,
) -> ConsensusSession:
    if session.stage is not Stage.INITIAL_PROPOSAL:
        raise WrongStage(f"respond is only valid in initial_proposal, not {session.stage.value}")
    if actor is not session.reviewer:
        raise WrongActor(f"only the {session.reviewer.value} may respond to the proposal")
    at = session.started_at if at is None else at
    if isinstance(decision, Accept):
        payload = {"actor": actor.value, "decision": "accept"}
    else:
        effective: dict[str, Position] = {}
        for raw_kw, position in decision.changes:
            kw = normalize_keyword(raw_kw)
            baseline = session.draft_panel.entries.get(kw)
            status_quo = ("change", baseline) if baseline is not None else ("drop", None)
            if canonical_position(position, baseline) == status_quo:
                continue  # restating the draft is not a modification
            effective[kw] = position
        if not effective:
            raise EmptyModification("modification list contains no actual changes")
        payload = {
            "actor": actor.value,
            "decision": "modify",
            "modifications": [
                {"keyword": kw, "position": position.to_dict()} for kw, position in effective.items()
            ],
        }
    _apply(session, {"kind": "responded", "actor": actor.value, "at": at, "payload": payload})
    return session


def submit_reason(
    session: ConsensusSession,
    actor: Role,
    keyword: str,
    reason: str,
    at: int | None = None,
) -> ConsensusSession:
    if session.stage not in (Stage.SELF_EVALUATION, Stage.PERSPECTIVE_TAKING):
        raise WrongStage(f"reasons are collected in self_evaluation or perspective_taking, not {session.stage.value}")
    if actor not in (Role.PARENT, Role.YOUTH):
        raise WrongActor("reasons come from the parent or the youth")
    kw = normalize_keyword(keyword)
    conflict = session.conflicts.get(kw)
    if conflict is None or conflict.resolved:
        raise NoSuchConflict(f"no open conflict on {kw!r}")
    text = reason.strip() or NO_REASON_SENTINEL
    at = session.started_at if at is None else at
    event = {
        "kind": "reason",
        "actor": actor.value,
        "at": at,
        "payload": {"actor": actor.value, "keyword": kw, "reason": text},
    }
    _apply(session, event)
    return session


def submit_position(
    session: ConsensusSession,
    actor: Role,
    keyword: str,
    position: Position,
    at: int | None = None,
) -> ConsensusSession:
    if session.stage is not Stage.PERSPECTIVE_TAKING:
        raise WrongStage(f"positions are taken in perspective_taking, not {session.stage.value}")
    if actor not in (Role.PARENT, Role.YOUTH):
        raise WrongActor("positions come from the parent or the youth")
    kw = normalize_keyword(keyword)
    conflict = session.conflicts.get(kw)
    if conflict is None or conflict.resolved:
        raise NoSuchConflict(f"no open conflict on {kw!r}")
    at = session.started_at if at is None else at
    event = {
        "kind": "position",
        "actor": actor.value,
        "at": at,
        "payload": {"actor": actor.value, "keyword": kw, "position": position.to_dict()},
    }
    _apply(session, event)
    return session


def advance(session: ConsensusSession, at: int | None = None) -> ConsensusSession:
    if session.stage is Stage.FINALIZED:
        raise WrongStage("session already finalized")
    at = session.started_at if at is None else at
    _apply(session, {"kind": "advanced", "actor": "system", "at": at, "payload": {}})
    return session


def finalize(session: ConsensusSession) -> tuple[PreferencePanel, Outcome]:
    """Return the co-preference panel and outcome. Idempotent."""
    if session.stage is not Stage.FINALIZED or session.co_panel is None or session.outcome is None:
        raise NotFinalized("session has not reached the finalized stage")
    return session.co_panel, session.outcome


# --- export and replay -----------------------------------------------------


def export_events(session: ConsensusSession) -> list[dict]:
    return [dict(e) for e in session.events]


def apply_event(session: ConsensusSession | None, event: Mapping) -> ConsensusSession:
    """Incremental replay step: None + 'started' opens, anything else folds in."""
    if session is None:
        if event["kind"] != "started":
            raise ValidationError("event log must begin with a 'started' event")
        return _apply_started(event)
    _apply(session, event)
    return session


def replay_session(events: Sequence[Mapping]) -> ConsensusSession:
    """Rebuild a session from its event log. Bit-exact with the original."""
    if not events or events[0]["kind"] != "started":
        raise ValidationError("event log must begin with a 'started' event")
    session = _apply_started(events[0])
    for event in events[1:]:
        _apply(session, event)
    return session


def session_snapshot(session: ConsensusSession) -> dict:
    """Deterministic full-state view; equality here means state equality."""
    return {
        "session_id": session.session_id,
        "initiator": session.initiator.value,
        "stage": session.stage.value,
        "iteration": session.iteration,
        "outcome": session.outcome.value if session.outcome else None,
        "initiator_panel": panel_to_doc(session.initiator_panel),
        "draft_panel": panel_to_doc(session.draft_panel),
        "co_panel": panel_to_doc(session.co_panel) if session.co_panel else None,
        "conflicts": [session.conflicts[kw].to_dict() for kw in session.conflicts],
        "changed_this_round": session.changed_this_round,
        "started_at": session.started_at,
        "deadline": session.deadline,
        "transcript": [m.to_dict() for m in session.transcript],
        "config": {
            "max_iterations": session.config.max_iterations,
            "session_timeout": session.config.session_timeout,
        },
    }
