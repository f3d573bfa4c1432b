"""HTTP layer over the store: pairing, panels, consensus, censorship, reports.

The app factory takes an injectable clock and RNG so tests control time
(pairing-code expiry) and identifiers. Domain errors map to statuses in
one place: validation 422, state conflicts 409, role violations 403,
unknown ids 404. The events listing is a redacted summary feed; free-text
negotiation reasons never leave the session transcript endpoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

from fastapi import Body, FastAPI, Header, Query, Request
from fastapi.responses import JSONResponse

from . import consensus as cs
from .errors import CoviewError, NotFoundError, RoleError, StateError, ValidationError
from .feedback import DEFAULT_BUCKET_MS, Period, aggregate, build_in_time
from .guidelines import (
    CommonGuidelineSet,
    derive_personalized,
    load_common_file,
    load_default,
    render_prompt_context,
    serialize_common,
)
from .ingest import IngestConfig, bundle_to_chunks, load_bundle_dir
from .preference import (
    LabeledVideoRef,
    PreferencePanel,
    Role,
    SuitabilityLabel,
    infer_from_videos,
    new_panel,
    panel_to_doc,
)
from .provider import ProviderConfig, ProviderKind, censor, default_lexicon_path
from .store import PairState, Store, event_view, make_clock

_STATUS_BY_CLASS = (
    (NotFoundError, 404),
    (StateError, 409),
    (RoleError, 403),
    (ValidationError, 422),
)


def status_for(exc: CoviewError) -> int:
    for klass, status in _STATUS_BY_CLASS:
        if isinstance(exc, klass):
            return status
    return 500


@dataclass(frozen=True)
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    data_dir: str = "./coview-data"
    provider: ProviderConfig = field(default_factory=lambda: ProviderConfig(lexicon_path=default_lexicon_path()))
    guidelines_path: str | None = None
    consensus: cs.ConsensusConfig = field(default_factory=cs.ConsensusConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)

    def guideline_set(self) -> CommonGuidelineSet:
        if self.guidelines_path:
            return load_common_file(self.guidelines_path)
        return load_default()


def load_service_config(path: str | Path) -> ServiceConfig:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"config: not found: {p}")
    try:
        doc = json.loads(p.read_text("utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config: not valid JSON: {exc}") from None
    if not isinstance(doc, Mapping):
        raise ValidationError("config: must be a JSON object")

    provider_doc = doc.get("provider", {})
    try:
        kind = ProviderKind(provider_doc.get("kind", "mock"))
    except ValueError:
        raise ValidationError(f"config: unknown provider kind {provider_doc.get('kind')!r}") from None
    lexicon_path = provider_doc.get("lexicon_path")
    if kind is ProviderKind.MOCK and not lexicon_path:
        lexicon_path = default_lexicon_path()
    provider = ProviderConfig(
        kind=kind,
        endpoint=provider_doc.get("endpoint"),
        model_name=provider_doc.get("model_name"),
        context_budget=int(provider_doc.get("context_budget", 8000)),
        request_timeout=int(provider_doc.get("request_timeout", 30000)),
        lexicon_path=lexicon_path,
        max_in_flight=int(provider_doc.get("max_in_flight", 4)),
    )
    consensus_doc = doc.get("consensus", {})
    ingest_doc = doc.get("ingest", {})
    return ServiceConfig(
        host=doc.get("host", "127.0.0.1"),
        port=int(doc.get("port", 8080)),
        data_dir=doc.get("data_dir", "./coview-data"),
        provider=provider,
        guidelines_path=doc.get("guidelines_path"),
        consensus=cs.ConsensusConfig(
            max_iterations=int(consensus_doc.get("max_iterations", cs.DEFAULT_MAX_ITERATIONS)),
            session_timeout=int(consensus_doc.get("session_timeout", cs.DEFAULT_SESSION_TIMEOUT_MS)),
        ),
        ingest=IngestConfig(
            similarity_threshold=float(ingest_doc.get("similarity_threshold", IngestConfig().similarity_threshold)),
            histogram_bins=int(ingest_doc.get("histogram_bins", IngestConfig().histogram_bins)),
            chunk_budget=int(ingest_doc.get("chunk_budget", IngestConfig().chunk_budget)),
        ),
    )


def _parse_party_role(value) -> Role:
    if value not in (Role.PARENT.value, Role.YOUTH.value):
        raise ValidationError(f"role must be 'parent' or 'youth', got {value!r}")
    return Role(value)


def create_app(
    store: Store,
    provider_cfg: ProviderConfig | None = None,
    guideline_set: CommonGuidelineSet | None = None,
    consensus_cfg: cs.ConsensusConfig | None = None,
    ingest_cfg: IngestConfig | None = None,
    clock: Callable[[], int] | None = None,
    rng=None,
) -> FastAPI:
    provider_cfg = provider_cfg or ProviderConfig(lexicon_path=default_lexicon_path())
    guideline_set = guideline_set or load_default()
    consensus_cfg = consensus_cfg or cs.ConsensusConfig()
    ingest_cfg = ingest_cfg or IngestConfig()
    clock = clock or make_clock()
    catalog = cs.load_template_catalog()

    app = FastAPI(title="coview", docs_url=None, redoc_url=None)

    @app.exception_handler(CoviewError)
    async def _coview_error(request: Request, exc: CoviewError):
        return JSONResponse(
            status_code=status_for(exc), content={"error": type(exc).__name__, "detail": str(exc)}
        )

    # -- auth helpers --------------------------------------------------------

    def auth(authorization: str | None) -> tuple[PairState, Role]:
        if not authorization or not authorization.startswith("Bearer "):
            raise RoleError("missing bearer token")
        return store.authenticate(authorization[len("Bearer "):])

    def pair_scope(pair_id: str, authorization: str | None) -> tuple[PairState, Role]:
        target = store.pair_or_404(pair_id)
        pair, role = auth(authorization)
        if pair.pair_id != target.pair_id:
            raise RoleError("token does not grant access to this pair")
        return target, role

    def session_scope(session_id: str, authorization: str | None):
        session = store.session_or_404(session_id)
        pair, role = auth(authorization)
        if store.session_pair[session_id] != pair.pair_id:
            raise RoleError("token does not grant access to this session")
        return pair, role, session

    # -- views ---------------------------------------------------------------

    def session_view(session: cs.ConsensusSession, viewer: Role) -> dict:
        messages = [
            {
                "seq": i,
                "stage": msg.stage.value,
                "template_id": msg.template_id,
                "text": cs.render_message(msg, catalog),
            }
            for i, msg in enumerate(session.transcript)
            if msg.addressee is viewer
        ]
        conflicts = [
            {
                "keyword": c.keyword,
                "baseline": c.baseline,
                "initiator_position": c.initiator_position.to_dict(),
                "reviewer_position": c.reviewer_position.to_dict(),
                "resolved": c.resolved,
            }
            for _, c in sorted(session.conflicts.items())
        ]
        return {
            "session_id": session.session_id,
            "stage": session.stage.value,
            "iteration": session.iteration,
            "outcome": session.outcome.value if session.outcome else None,
            "initiator": session.initiator.value,
            "reviewer": session.reviewer.value,
            "viewer": viewer.value,
            "deadline": session.deadline,
            "config": {
                "max_iterations": session.config.max_iterations,
                "session_timeout": session.config.session_timeout,
            },
            "draft_panel": panel_to_doc(session.draft_panel),
            "co_panel": panel_to_doc(session.co_panel) if session.co_panel else None,
            "conflicts": conflicts,
            "messages": messages,
        }

    # -- pairing -------------------------------------------------------------

    @app.post("/pairs")
    def create_pair():
        pair = store.create_pair(at=clock(), rng=rng)
        return {
            "pair_id": pair.pair_id,
            "code": pair.code,
            "created_at": pair.code_created_at,
            "ttl": pair.code_ttl,
        }

    @app.post("/pairs/{code}/join")
    def join_pair(code: str, body: dict = Body(...)):
        role = _parse_party_role(body.get("role"))
        account = body.get("account")
        if not isinstance(account, str) or not account:
            raise ValidationError("account must be a non-empty string")
        pair, token = store.join_pair(code, role, account, at=clock(), rng=rng)
        return {"pair_id": pair.pair_id, "role": role.value, "token": token, "complete": pair.complete}

    @app.get("/pairs/{pair_id}")
    def get_pair(pair_id: str, authorization: str | None = Header(default=None)):
        pair, _ = pair_scope(pair_id, authorization)
        return {
            "pair_id": pair.pair_id,
            "complete": pair.complete,
            "accounts": {role.value: pair.accounts[role] for role in sorted(pair.accounts, key=lambda r: r.value)},
            "sessions": list(pair.session_ids),
            "co_panel": panel_to_doc(pair.co_panel) if pair.co_panel else None,
        }

    @app.get("/guidelines")
    def get_guidelines():
        return serialize_common(guideline_set)

    # -- panels --------------------------------------------------------------

    @app.get("/pairs/{pair_id}/panels/{role}")
    def get_panel(pair_id: str, role: str, authorization: str | None = Header(default=None)):
        pair, _ = pair_scope(pair_id, authorization)
        if role == Role.CO.value:
            panel = pair.co_panel or new_panel(Role.CO)
        else:
            panel = pair.panels.get(_parse_party_role(role)) or new_panel(Role(role))
        return panel_to_doc(panel)

    @app.put("/pairs/{pair_id}/panels/{role}")
    def put_panel(
        pair_id: str, role: str, body: dict = Body(...), authorization: str | None = Header(default=None)
    ):
        pair, caller = pair_scope(pair_id, authorization)
        target = _parse_party_role(role)
        if caller is not target:
            raise RoleError(f"the {target.value} panel is edited by the {target.value}")
        entries = body.get("entries")
        if not isinstance(entries, Mapping):
            raise ValidationError("body must carry an 'entries' object of keyword -> weight")
        now = clock()
        panel = new_panel(target, entries, at=now)
        previous = pair.panels.get(target)
        if previous is not None:
            panel = PreferencePanel(
                role=target, entries=panel.entries, revision=previous.revision + 1, updated_at=now
            )
        store.set_panel(pair, target, panel, actor=caller.value, at=now)
        return panel_to_doc(store.pairs[pair.pair_id].panels[target])

    @app.post("/pairs/{pair_id}/panels/{role}/from-videos")
    def panel_from_videos(
        pair_id: str, role: str, body: dict = Body(...), authorization: str | None = Header(default=None)
    ):
        pair, caller = pair_scope(pair_id, authorization)
        target = _parse_party_role(role)
        if caller is not target:
            raise RoleError(f"the {target.value} panel is edited by the {target.value}")
        videos = body.get("videos")
        if not isinstance(videos, list) or not videos:
            raise ValidationError("body must carry a non-empty 'videos' array")
        labeled = []
        for i, entry in enumerate(videos):
            if not isinstance(entry, Mapping):
                raise ValidationError(f"videos[{i}] must be an object")
            label = entry.get("label")
            if label not in (SuitabilityLabel.SUITABLE.value, SuitabilityLabel.UNSUITABLE.value):
                raise ValidationError(f"videos[{i}].label must be 'suitable' or 'unsuitable'")
            video_id = entry.get("video_id", f"inline-{i}")
            scores = entry.get("scores")
            if scores is None:
                record = store.videos.get(video_id)
                if record is None or record.latest_result is None:
                    raise ValidationError(
                        f"videos[{i}] needs inline 'scores' or the id of an analyzed video"
                    )
                scores = dict(record.latest_result.features.scores)
            if not isinstance(scores, Mapping):
                raise ValidationError(f"videos[{i}].scores must be an object")
            for kw, value in scores.items():
                if not isinstance(value, int) or isinstance(value, bool) or not (-2 <= value <= 2):
                    raise ValidationError(f"videos[{i}].scores[{kw!r}] must be an integer in -2..2")
            labeled.append((LabeledVideoRef(video_id, SuitabilityLabel(label)), dict(scores)))
        now = clock()
        base = pair.panels.get(target) or new_panel(target)
        inferred = infer_from_videos(base, labeled, at=now)
        store.set_panel(pair, target, inferred, actor=caller.value, at=now)
        return panel_to_doc(store.pairs[pair.pair_id].panels[target])

    # -- consensus -----------------------------------------------------------

    @app.post("/pairs/{pair_id}/consensus")
    def start_consensus(
        pair_id: str, body: dict = Body(default={}), authorization: str | None = Header(default=None)
    ):
        pair, caller = pair_scope(pair_id, authorization)
        with store.lock:
            for sid in pair.session_ids:
                if store.sessions[sid].stage is not cs.Stage.FINALIZED:
                    raise StateError(f"session {sid} is still active for this pair")
            cfg_doc = body.get("config") or {}
            cfg = cs.ConsensusConfig(
                max_iterations=int(cfg_doc.get("max_iterations", consensus_cfg.max_iterations)),
                session_timeout=int(cfg_doc.get("session_timeout", consensus_cfg.session_timeout)),
            )
            session_id = f"cs-{len(store.sessions) + 1:04d}"
            panel = pair.panels.get(caller) or new_panel(caller)
            now = clock()
            session = cs.start_session(caller, panel, cfg, session_id=session_id, at=now)
            store.record_consensus_event(pair.pair_id, session_id, session.events[0], caller.value, now)
        return session_view(store.sessions[session_id], caller)

    @app.get("/consensus/{session_id}")
    def get_consensus(session_id: str, authorization: str | None = Header(default=None)):
        _, role, session = session_scope(session_id, authorization)
        return session_view(session, role)

    @app.post("/consensus/{session_id}/respond")
    def respond_consensus(
        session_id: str, body: dict = Body(...), authorization: str | None = Header(default=None)
    ):
        with store.lock:
            pair, role, session = session_scope(session_id, authorization)
            decision_raw = body.get("decision")
            if decision_raw == "accept":
                decision: cs.Accept | cs.Modify = cs.Accept()
            elif decision_raw == "modify":
                mods_raw = body.get("modifications")
                if not isinstance(mods_raw, list) or not mods_raw:
                    raise ValidationError("modify decision needs a non-empty 'modifications' array")
                mods = []
                for i, m in enumerate(mods_raw):
                    if not isinstance(m, Mapping) or "keyword" not in m or not isinstance(m.get("position"), Mapping):
                        raise ValidationError(f"modifications[{i}] needs 'keyword' and 'position'")
                    mods.append((m["keyword"], cs.Position.from_dict(m["position"])))
                decision = cs.Modify(tuple(mods))
            else:
                raise ValidationError("decision must be 'accept' or 'modify'")
            now = clock()
            cs.reviewer_respond(session, role, decision, at=now)
            store.record_consensus_event(pair.pair_id, session_id, session.events[-1], role.value, now)
            return session_view(session, role)

    @app.post("/consensus/{session_id}/reasons")
    def submit_reason(
        session_id: str, body: dict = Body(...), authorization: str | None = Header(default=None)
    ):
        with store.lock:
            pair, role, session = session_scope(session_id, authorization)
            keyword = body.get("keyword")
            if not isinstance(keyword, str):
                raise ValidationError("body must carry a 'keyword' string")
            reason = body.get("reason", "")
            if not isinstance(reason, str):
                raise ValidationError("'reason' must be a string")
            now = clock()
            cs.submit_reason(session, role, keyword, reason, at=now)
            store.record_consensus_event(pair.pair_id, session_id, session.events[-1], role.value, now)
            return session_view(session, role)

    @app.post("/consensus/{session_id}/positions")
    def submit_position(
        session_id: str, body: dict = Body(...), authorization: str | None = Header(default=None)
    ):
        with store.lock:
            pair, role, session = session_scope(session_id, authorization)
            keyword = body.get("keyword")
            if not isinstance(keyword, str):
                raise ValidationError("body must carry a 'keyword' string")
            if not isinstance(body.get("position"), Mapping):
                raise ValidationError("body must carry a 'position' object")
            position = cs.Position.from_dict(body["position"])
            now = clock()
            cs.submit_position(session, role, keyword, position, at=now)
            store.record_consensus_event(pair.pair_id, session_id, session.events[-1], role.value, now)
            return session_view(session, role)

    @app.post("/consensus/{session_id}/advance")
    def advance_consensus(session_id: str, authorization: str | None = Header(default=None)):
        with store.lock:
            pair, role, session = session_scope(session_id, authorization)
            now = clock()
            cs.advance(session, at=now)
            store.record_consensus_event(pair.pair_id, session_id, session.events[-1], "system", now)
            return session_view(session, role)

    # -- videos and censorship ----------------------------------------------

    @app.post("/pairs/{pair_id}/videos")
    def register_video(
        pair_id: str, body: dict = Body(...), authorization: str | None = Header(default=None)
    ):
        pair, caller = pair_scope(pair_id, authorization)
        bundle_ref = body.get("bundle_ref")
        if not isinstance(bundle_ref, str) or not bundle_ref:
            raise ValidationError("body must carry a 'bundle_ref' path")
        video_id = body.get("video_id")
        if video_id is not None and (not isinstance(video_id, str) or not video_id):
            raise ValidationError("'video_id' must be a non-empty string when given")
        record = store.register_video(pair, bundle_ref, caller, at=clock(), video_id=video_id)
        return {
            "video_id": record.video_id,
            "pair_id": record.pair_id,
            "bundle_ref": record.bundle_ref,
            "submitted_by": record.submitted_by.value,
        }

    @app.post("/videos/{video_id}/censor")
    def censor_video(video_id: str, authorization: str | None = Header(default=None)):
        video = store.video_or_404(video_id)
        pair, _ = auth(authorization)
        if pair.pair_id != video.pair_id:
            raise RoleError("token does not grant access to this video")
        bundle = load_bundle_dir(video.bundle_ref)
        chunks = bundle_to_chunks(bundle, ingest_cfg)
        co_panel = pair.co_panel or new_panel(Role.CO)
        context = render_prompt_context(guideline_set, derive_personalized(co_panel))
        now = clock()
        result = censor(chunks, context, provider_cfg, guideline_set, video_id=video.video_id, at=now)
        feedback = build_in_time(co_panel, result)
        store.record_censorship(video, result, feedback, at=now)
        return result.to_dict()

    @app.get("/videos/{video_id}/feedback")
    def get_feedback(video_id: str, authorization: str | None = Header(default=None)):
        video = store.video_or_404(video_id)
        pair, _ = auth(authorization)
        if pair.pair_id != video.pair_id:
            raise RoleError("token does not grant access to this video")
        return store.latest_feedback(video_id).to_dict()

    # -- reports and events --------------------------------------------------

    @app.get("/pairs/{pair_id}/reports")
    def get_report(
        pair_id: str,
        from_ms: int = Query(alias="from"),
        to_ms: int = Query(alias="to"),
        bucket: int = Query(default=DEFAULT_BUCKET_MS),
        authorization: str | None = Header(default=None),
    ):
        pair, _ = pair_scope(pair_id, authorization)
        period = Period(start=from_ms, end=to_ms, bucket=bucket)
        return aggregate(pair.feedback, period, guideline_set).to_dict()

    @app.get("/pairs/{pair_id}/events")
    def get_events(pair_id: str, authorization: str | None = Header(default=None)):
        pair, _ = pair_scope(pair_id, authorization)
        return {"events": [event_view(record) for record in pair.events]}

    return app


def build_app_from_config(cfg: ServiceConfig) -> FastAPI:
    store = Store(cfg.data_dir)
    return create_app(
        store,
        provider_cfg=cfg.provider,
        guideline_set=cfg.guideline_set(),
        consensus_cfg=cfg.consensus,
        ingest_cfg=cfg.ingest,
    )


def serve(cfg: ServiceConfig) -> None:
    import uvicorn

    uvicorn.run(build_app_from_config(cfg), host=cfg.host, port=cfg.port, log_level="warning")
