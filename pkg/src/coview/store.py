"""File-backed state for the service: pairs, panels, sessions, results.

One JSON-lines event log holds every state change. Appending an event
writes the line and applies it to in-memory state through a single code
path; opening an existing data directory replays the log through the
same path, so a restarted process reconstructs state exactly. Events are
immutable once written and carry a per-pair strictly increasing seq.
"""

from __future__ import annotations

import json
import secrets
import string
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from . import consensus as cs
from .errors import NotFoundError, RoleError, StateError, ValidationError
from .feedback import InTimeFeedback
from .preference import PreferencePanel, Role, panel_from_doc, panel_to_doc
from .provider import CensorshipResult

CODE_ALPHABET = string.ascii_uppercase + string.digits
CODE_LENGTH = 6
DEFAULT_CODE_TTL_MS = 86_400_000  # 24 hours


class UnknownCode(NotFoundError):
    pass


class CodeExpired(StateError):
    pass


class CodeUsed(StateError):
    pass


class RoleTaken(StateError):
    pass


@dataclass
class VideoRecord:
    video_id: str
    pair_id: str
    bundle_ref: str
    submitted_by: Role
    latest_result: CensorshipResult | None = None


@dataclass
class PairState:
    pair_id: str
    code: str
    code_created_at: int
    code_ttl: int
    code_used: bool = False
    accounts: dict[Role, str] = field(default_factory=dict)
    tokens: dict[Role, str] = field(default_factory=dict)
    panels: dict[Role, PreferencePanel] = field(default_factory=dict)
    co_panel: PreferencePanel | None = None
    feedback: list[InTimeFeedback] = field(default_factory=list)
    session_ids: list[str] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    next_seq: int = 0

    @property
    def complete(self) -> bool:
        return Role.PARENT in self.accounts and Role.YOUTH in self.accounts


def generate_code(rng=None) -> str:
    if rng is None:
        return "".join(secrets.choice(CODE_ALPHABET) for _ in range(CODE_LENGTH))
    return "".join(rng.choice(CODE_ALPHABET) for _ in range(CODE_LENGTH))


def generate_token(rng=None) -> str:
    if rng is None:
        return secrets.token_hex(16)
    return "".join(rng.choice("0123456789abcdef") for _ in range(32))


class Store:
    """Append-only event log plus the state folded from it.

    All mutation goes through append(); handlers validate first, then
    append the already-resolved event. _apply must stay deterministic:
    anything computed at request time (results, tokens, generated ids)
    is stored in the event payload, never recomputed during replay.
    """

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.log_path = self.data_dir / "events.jsonl"
        self.lock = threading.RLock()
        self.pairs: dict[str, PairState] = {}
        self.codes: dict[str, str] = {}  # pairing code -> pair_id
        self.tokens: dict[str, tuple[str, Role]] = {}
        self.videos: dict[str, VideoRecord] = {}
        self.sessions: dict[str, cs.ConsensusSession] = {}
        self.session_pair: dict[str, str] = {}
        self._replay()

    # -- log plumbing --------------------------------------------------------

    def _replay(self) -> None:
        if not self.log_path.is_file():
            return
        with self.log_path.open("r", encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ValidationError(f"event log line {line_no}: not valid JSON: {exc}") from None
                self._apply(record)

    def append(self, pair_id: str, actor: str, kind: str, payload: dict, at: int) -> dict:
        with self.lock:
            pair = self.pairs.get(pair_id)
            seq = pair.next_seq if pair is not None else 0
            record = {
                "seq": seq,
                "pair_id": pair_id,
                "actor": actor,
                "kind": kind,
                "payload": payload,
                "at": at,
            }
            with self.log_path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
            self._apply(record)
            return record

    # -- event application ---------------------------------------------------

    def _apply(self, record: Mapping) -> None:
        kind = record["kind"]
        handler = getattr(self, f"_apply_{kind}", None)
        if handler is None:
            raise ValidationError(f"unknown event kind {kind!r}")
        handler(record)
        pair = self.pairs[record["pair_id"]]
        pair.events.append(dict(record))
        pair.next_seq = record["seq"] + 1

    def _apply_pair_created(self, record: Mapping) -> None:
        payload = record["payload"]
        pair = PairState(
            pair_id=record["pair_id"],
            code=payload["code"],
            code_created_at=record["at"],
            code_ttl=payload["ttl"],
        )
        self.pairs[pair.pair_id] = pair
        self.codes[pair.code] = pair.pair_id

    def _apply_joined(self, record: Mapping) -> None:
        payload = record["payload"]
        pair = self.pairs[record["pair_id"]]
        role = Role(payload["role"])
        pair.accounts[role] = payload["account"]
        pair.tokens[role] = payload["token"]
        self.tokens[payload["token"]] = (pair.pair_id, role)
        if pair.complete:
            pair.code_used = True

    def _apply_welcome(self, record: Mapping) -> None:
        pass  # presence in the log is the effect

    def _apply_panel_set(self, record: Mapping) -> None:
        payload = record["payload"]
        pair = self.pairs[record["pair_id"]]
        role = Role(payload["role"])
        panel = panel_from_doc(payload["panel"])
        panel = PreferencePanel(
            role=panel.role, entries=panel.entries, revision=panel.revision, updated_at=record["at"]
        )
        if role is Role.CO:
            pair.co_panel = panel
        else:
            pair.panels[role] = panel

    def _apply_video_registered(self, record: Mapping) -> None:
        payload = record["payload"]
        self.videos[payload["video_id"]] = VideoRecord(
            video_id=payload["video_id"],
            pair_id=record["pair_id"],
            bundle_ref=payload["bundle_ref"],
            submitted_by=Role(payload["submitted_by"]),
        )

    def _apply_censored(self, record: Mapping) -> None:
        payload = record["payload"]
        pair = self.pairs[record["pair_id"]]
        video = self.videos[payload["video_id"]]
        video.latest_result = CensorshipResult.from_dict(payload["result"])
        pair.feedback.append(InTimeFeedback.from_dict(payload["feedback"]))

    def _apply_consensus(self, record: Mapping) -> None:
        payload = record["payload"]
        sid = payload["session_id"]
        pair = self.pairs[record["pair_id"]]
        event = payload["event"]
        session = self.sessions.get(sid)
        if session is None:
            session = cs.apply_event(None, event)
            self.sessions[sid] = session
            self.session_pair[sid] = record["pair_id"]
            pair.session_ids.append(sid)
        elif session.events and session.events[-1] is event:
            pass  # the live operation that produced this event already applied it
        else:
            cs.apply_event(session, event)
        if session.stage is cs.Stage.FINALIZED and session.outcome is cs.Outcome.REACHED:
            pair.co_panel = session.co_panel

    # -- lookups with uniform errors ----------------------------------------

    def pair_or_404(self, pair_id: str) -> PairState:
        pair = self.pairs.get(pair_id)
        if pair is None:
            raise NotFoundError(f"no pair {pair_id!r}")
        return pair

    def video_or_404(self, video_id: str) -> VideoRecord:
        video = self.videos.get(video_id)
        if video is None:
            raise NotFoundError(f"no video {video_id!r}")
        return video

    def session_or_404(self, session_id: str) -> cs.ConsensusSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise NotFoundError(f"no consensus session {session_id!r}")
        return session

    # -- pairing operations --------------------------------------------------

    def create_pair(self, at: int, rng=None, ttl: int = DEFAULT_CODE_TTL_MS) -> PairState:
        with self.lock:
            while True:
                code = generate_code(rng)
                if code not in self.codes:
                    break
            pair_id = f"pair-{len(self.pairs) + 1:04d}"
            self.append(pair_id, "system", "pair_created", {"code": code, "ttl": ttl}, at)
            return self.pairs[pair_id]

    def join_pair(self, code: str, role: Role, account: str, at: int, rng=None) -> tuple[PairState, str]:
        if role not in (Role.PARENT, Role.YOUTH):
            raise ValidationError("join role must be parent or youth")
        if not account or not isinstance(account, str):
            raise ValidationError("account must be a non-empty string")
        with self.lock:
            pair_id = self.codes.get(code)
            if pair_id is None:
                raise UnknownCode(f"no pairing code {code!r}")
            pair = self.pairs[pair_id]
            if pair.code_used:
                raise CodeUsed("pairing code already used by a complete pair")
            if at > pair.code_created_at + pair.code_ttl:
                raise CodeExpired("pairing code expired")
            if role in pair.accounts:
                raise RoleTaken(f"the {role.value} slot is already filled")
            token = generate_token(rng)
            self.append(
                pair_id, role.value, "joined", {"role": role.value, "account": account, "token": token}, at
            )
            if pair.complete:
                self.append(pair_id, "system", "welcome", {}, at)
            return pair, token

    def authenticate(self, token: str) -> tuple[PairState, Role]:
        entry = self.tokens.get(token)
        if entry is None:
            raise RoleError("token not recognized")
        pair_id, role = entry
        return self.pairs[pair_id], role

    # -- panel and video state helpers --------------------------------------

    def set_panel(self, pair: PairState, role: Role, panel: PreferencePanel, actor: str, at: int) -> None:
        self.append(
            pair.pair_id,
            actor,
            "panel_set",
            {"role": role.value, "panel": panel_to_doc(panel)},
            at,
        )

    def register_video(
        self, pair: PairState, bundle_ref: str, submitted_by: Role, at: int, video_id: str | None = None
    ) -> VideoRecord:
        with self.lock:
            if video_id is None:
                video_id = f"video-{len(self.videos) + 1:04d}"
            if video_id in self.videos:
                raise StateError(f"video id {video_id!r} already registered")
            self.append(
                pair.pair_id,
                submitted_by.value,
                "video_registered",
                {"video_id": video_id, "bundle_ref": bundle_ref, "submitted_by": submitted_by.value},
                at,
            )
            return self.videos[video_id]

    def record_censorship(
        self, video: VideoRecord, result: CensorshipResult, feedback: InTimeFeedback, at: int
    ) -> None:
        self.append(
            video.pair_id,
            "system",
            "censored",
            {"video_id": video.video_id, "result": result.to_dict(), "feedback": feedback.to_dict()},
            at,
        )

    def record_consensus_event(self, pair_id: str, session_id: str, event: dict, actor: str, at: int) -> None:
        # The event dict is passed by reference on purpose: _apply_consensus
        # recognizes the session's own latest event by identity and skips
        # re-applying it. Replayed events come from json.loads and never match.
        self.append(pair_id, actor, "consensus", {"session_id": session_id, "event": event}, at)

    def latest_feedback(self, video_id: str) -> InTimeFeedback:
        video = self.video_or_404(video_id)
        pair = self.pairs[video.pair_id]
        for record in reversed(pair.feedback):
            if record.video_id == video_id:
                return record
        raise NotFoundError(f"video {video_id!r} has no feedback yet")


# Event payload fields exposed through the event listing. Everything else
# is redacted: consensus inner payloads hold free-text reasons, censored
# events hold full transcripts of results. The listing is a summary feed.
_EVENT_VIEW_FIELDS: dict[str, tuple[str, ...]] = {
    "pair_created": ("ttl",),
    "joined": ("role", "account"),
    "welcome": (),
    "panel_set": ("role",),
    "video_registered": ("video_id", "submitted_by"),
    "censored": ("video_id",),
    "consensus": ("session_id",),
}


def event_view(record: Mapping) -> dict:
    kind = record["kind"]
    payload = record["payload"]
    summary = {k: payload[k] for k in _EVENT_VIEW_FIELDS.get(kind, ()) if k in payload}
    if kind == "consensus":
        summary["step"] = payload["event"]["kind"]
    if kind == "censored":
        summary["age_band"] = payload["result"]["age_band"]
    return {
        "seq": record["seq"],
        "actor": record["actor"],
        "kind": kind,
        "at": record["at"],
        "summary": summary,
    }


def make_clock() -> Callable[[], int]:
    import time

    return lambda: int(time.time() * 1000)
