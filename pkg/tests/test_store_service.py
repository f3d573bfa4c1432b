"""Event-log store and HTTP service tests.

Store tests drive the log directly and assert replay equivalence; service
tests run the FastAPI app in-process with an injected step clock and seeded
RNG so pairing codes, tokens, and timestamps are reproducible.
"""

import json
import random
import re

import pytest
from fastapi.testclient import TestClient

from conftest import StepClock
from coview import consensus as cs
from coview.errors import CoviewError, NotFoundError, RoleError, StateError, ValidationError
from coview.guidelines import load_default, serialize_common
from coview.preference import Role, new_panel, panel_to_doc
from coview.service import ServiceConfig, create_app, load_service_config, status_for
from coview.store import (
    CODE_ALPHABET,
    CODE_LENGTH,
    DEFAULT_CODE_TTL_MS,
    CodeExpired,
    CodeUsed,
    RoleTaken,
    Store,
    UnknownCode,
    event_view,
    generate_code,
    generate_token,
)

CODE_RE = re.compile(r"^[A-Z0-9]{6}$")


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True)


# -- code and token generation ----------------------------------------------


def test_generate_code_format():
    for _ in range(20):
        code = generate_code()
        assert CODE_RE.fullmatch(code)
    assert len(CODE_ALPHABET) == 36 and CODE_LENGTH == 6


def test_generate_code_rng_is_deterministic():
    a = generate_code(random.Random(5))
    b = generate_code(random.Random(5))
    assert a == b
    assert CODE_RE.fullmatch(a)


def test_generate_token_format():
    assert re.fullmatch(r"[0-9a-f]{32}", generate_token())
    assert generate_token(random.Random(5)) == generate_token(random.Random(5))


# -- store: pairing ----------------------------------------------------------


def test_create_pair_basics(tmp_path):
    store = Store(tmp_path)
    pair = store.create_pair(at=1000, rng=random.Random(1))
    assert pair.pair_id == "pair-0001"
    assert store.codes[pair.code] == pair.pair_id
    assert pair.code_created_at == 1000
    assert pair.code_ttl == DEFAULT_CODE_TTL_MS
    assert pair.events[0]["kind"] == "pair_created"
    assert pair.events[0]["seq"] == 0
    assert pair.next_seq == 1
    assert store.create_pair(at=2000, rng=random.Random(2)).pair_id == "pair-0002"


def test_join_flow_completes_with_welcome(tmp_path):
    store = Store(tmp_path)
    pair = store.create_pair(at=1000, rng=random.Random(1))
    joined, token = store.join_pair(pair.code, Role.YOUTH, "kid", at=1100, rng=random.Random(2))
    assert joined is pair
    assert not pair.complete
    assert pair.accounts[Role.YOUTH] == "kid"
    assert store.authenticate(token) == (pair, Role.YOUTH)

    _, parent_token = store.join_pair(pair.code, Role.PARENT, "mom", at=1200, rng=random.Random(3))
    assert pair.complete and pair.code_used
    assert store.authenticate(parent_token) == (pair, Role.PARENT)
    kinds = [e["kind"] for e in pair.events]
    assert kinds == ["pair_created", "joined", "joined", "welcome"]
    assert pair.events[-1]["actor"] == "system"
    assert [e["seq"] for e in pair.events] == [0, 1, 2, 3]


def test_join_unknown_code(tmp_path):
    store = Store(tmp_path)
    with pytest.raises(UnknownCode):
        store.join_pair("ZZZZ99", Role.YOUTH, "kid", at=1000)


def test_join_role_taken(tmp_path):
    store = Store(tmp_path)
    pair = store.create_pair(at=1000, rng=random.Random(1))
    store.join_pair(pair.code, Role.YOUTH, "kid", at=1100, rng=random.Random(2))
    with pytest.raises(RoleTaken):
        store.join_pair(pair.code, Role.YOUTH, "sibling", at=1200, rng=random.Random(3))


def test_join_code_used_after_completion(tmp_path):
    store = Store(tmp_path)
    pair = store.create_pair(at=1000, rng=random.Random(1))
    store.join_pair(pair.code, Role.YOUTH, "kid", at=1100, rng=random.Random(2))
    store.join_pair(pair.code, Role.PARENT, "mom", at=1200, rng=random.Random(3))
    # used-up takes precedence over the role check once the pair is complete
    with pytest.raises(CodeUsed):
        store.join_pair(pair.code, Role.PARENT, "dad", at=1300, rng=random.Random(4))


def test_join_expiry_boundary_is_strict(tmp_path):
    store = Store(tmp_path)
    pair = store.create_pair(at=1000, rng=random.Random(1), ttl=500)
    # at == created + ttl is still in time; one ms past is not
    store.join_pair(pair.code, Role.YOUTH, "kid", at=1500, rng=random.Random(2))
    with pytest.raises(CodeExpired):
        store.join_pair(pair.code, Role.PARENT, "mom", at=1501, rng=random.Random(3))


def test_join_validation(tmp_path):
    store = Store(tmp_path)
    pair = store.create_pair(at=1000, rng=random.Random(1))
    with pytest.raises(ValidationError):
        store.join_pair(pair.code, Role.CO, "x", at=1100)
    with pytest.raises(ValidationError):
        store.join_pair(pair.code, Role.YOUTH, "", at=1100)


def test_authenticate_unknown_token(tmp_path):
    store = Store(tmp_path)
    with pytest.raises(RoleError):
        store.authenticate("deadbeef")


# -- store: videos, feedback, misc ------------------------------------------


def complete_pair(store, rng=None):
    rng = rng or random.Random(11)
    pair = store.create_pair(at=1000, rng=rng)
    store.join_pair(pair.code, Role.YOUTH, "kid", at=1100, rng=rng)
    store.join_pair(pair.code, Role.PARENT, "mom", at=1200, rng=rng)
    return pair


def test_register_video_ids_and_duplicates(tmp_path):
    store = Store(tmp_path)
    pair = complete_pair(store)
    video = store.register_video(pair, "/tmp/bundle-a", Role.YOUTH, at=2000)
    assert video.video_id == "video-0001"
    assert store.register_video(pair, "/tmp/bundle-b", Role.YOUTH, at=2100).video_id == "video-0002"
    with pytest.raises(StateError):
        store.register_video(pair, "/tmp/bundle-c", Role.YOUTH, at=2200, video_id="video-0001")


def test_latest_feedback_missing(tmp_path):
    store = Store(tmp_path)
    pair = complete_pair(store)
    store.register_video(pair, "/tmp/bundle", Role.YOUTH, at=2000)
    with pytest.raises(NotFoundError):
        store.latest_feedback("video-0001")
    with pytest.raises(NotFoundError):
        store.latest_feedback("video-9999")


def test_unknown_event_kind_rejected(tmp_path):
    store = Store(tmp_path)
    with pytest.raises(ValidationError):
        store._apply({"kind": "mystery", "pair_id": "p", "seq": 0, "payload": {}, "actor": "x", "at": 0})


def test_replay_reports_bad_log_line(tmp_path):
    (tmp_path / "events.jsonl").write_text("not json\n", encoding="utf-8")
    with pytest.raises(ValidationError, match="line 1"):
        Store(tmp_path)


def test_event_view_summaries(tmp_path):
    store = Store(tmp_path)
    pair = complete_pair(store)
    store.set_panel(pair, Role.YOUTH, new_panel(Role.YOUTH, {"music": 1}), actor="youth", at=1300)
    views = [event_view(e) for e in pair.events]
    assert views[0]["kind"] == "pair_created" and views[0]["summary"] == {"ttl": DEFAULT_CODE_TTL_MS}
    assert views[1]["summary"] == {"role": "youth", "account": "kid"}
    assert views[3]["kind"] == "welcome" and views[3]["summary"] == {}
    assert views[4]["summary"] == {"role": "youth"}
    for view in views:
        assert set(view) == {"seq", "actor", "kind", "at", "summary"}


def test_store_restart_replays_identically(tmp_path):
    store = Store(tmp_path)
    pair = complete_pair(store)
    store.set_panel(pair, Role.YOUTH, new_panel(Role.YOUTH, {"games": 2, "violence": -2}), actor="youth", at=1300)
    store.register_video(pair, "/tmp/bundle", Role.YOUTH, at=1400)

    session = cs.start_session(Role.YOUTH, pair.panels[Role.YOUTH], session_id="cs-0001", at=1500)
    store.record_consensus_event(pair.pair_id, "cs-0001", session.events[0], "youth", 1500)
    cs.reviewer_respond(session, Role.PARENT, cs.Accept(), at=1600)
    store.record_consensus_event(pair.pair_id, "cs-0001", session.events[-1], "parent", 1600)
    assert pair.co_panel is not None

    def fingerprint(s: Store) -> str:
        return canonical(
            {
                "codes": s.codes,
                "tokens": {t: [pid, role.value] for t, (pid, role) in s.tokens.items()},
                "pairs": {
                    pid: {
                        "code": p.code,
                        "code_used": p.code_used,
                        "accounts": {r.value: a for r, a in p.accounts.items()},
                        "panels": {r.value: panel_to_doc(pl) for r, pl in p.panels.items()},
                        "co_panel": panel_to_doc(p.co_panel) if p.co_panel else None,
                        "feedback": [f.to_dict() for f in p.feedback],
                        "session_ids": p.session_ids,
                        "events": p.events,
                        "next_seq": p.next_seq,
                    }
                    for pid, p in s.pairs.items()
                },
                "videos": {
                    vid: [v.pair_id, v.bundle_ref, v.submitted_by.value] for vid, v in s.videos.items()
                },
                "sessions": {sid: cs.session_snapshot(sess) for sid, sess in s.sessions.items()},
            }
        )

    reopened = Store(tmp_path)
    assert fingerprint(reopened) == fingerprint(store)


# -- service helpers ---------------------------------------------------------


def bearer(token: str) -> dict:
    return {"Authorization": f"Bearer {token}"}


def make_service(tmp_path, **overrides):
    clock = overrides.pop("clock", None) or StepClock()
    rng = overrides.pop("rng", None) or random.Random(2024)
    store = Store(tmp_path / "data")
    app = create_app(store, clock=clock, rng=rng, **overrides)
    return store, clock, TestClient(app)


def join_both(client):
    created = client.post("/pairs").json()
    code = created["code"]
    youth = client.post(f"/pairs/{code}/join", json={"role": "youth", "account": "kid"}).json()
    parent = client.post(f"/pairs/{code}/join", json={"role": "parent", "account": "mom"}).json()
    return created["pair_id"], bearer(youth["token"]), bearer(parent["token"])


def run_accept_session(client, pair_id, youth, parent, entries):
    """Youth proposes `entries`, parent accepts; returns the session id."""
    client.put(f"/pairs/{pair_id}/panels/youth", json={"entries": entries}, headers=youth)
    started = client.post(f"/pairs/{pair_id}/consensus", json={}, headers=youth)
    assert started.status_code == 200
    sid = started.json()["session_id"]
    done = client.post(f"/consensus/{sid}/respond", json={"decision": "accept"}, headers=parent)
    assert done.json()["outcome"] == "consensus_reached"
    return sid


# -- service: pairing --------------------------------------------------------


def test_http_pairing_flow(tmp_path):
    _, _, client = make_service(tmp_path)
    created = client.post("/pairs")
    assert created.status_code == 200
    body = created.json()
    assert body["pair_id"] == "pair-0001"
    assert CODE_RE.fullmatch(body["code"])
    assert body["ttl"] == DEFAULT_CODE_TTL_MS

    first = client.post(f"/pairs/{body['code']}/join", json={"role": "youth", "account": "kid"})
    assert first.status_code == 200 and first.json()["complete"] is False
    second = client.post(f"/pairs/{body['code']}/join", json={"role": "parent", "account": "mom"})
    assert second.status_code == 200 and second.json()["complete"] is True

    view = client.get("/pairs/pair-0001", headers=bearer(first.json()["token"]))
    assert view.status_code == 200
    assert view.json()["accounts"] == {"parent": "mom", "youth": "kid"}
    assert view.json()["co_panel"] is None


def test_http_join_errors(tmp_path):
    _, _, client = make_service(tmp_path)
    missing = client.post("/pairs/ZZZZ99/join", json={"role": "youth", "account": "kid"})
    assert missing.status_code == 404
    assert missing.json() == {"error": "UnknownCode", "detail": missing.json()["detail"]}

    code = client.post("/pairs").json()["code"]
    assert client.post(f"/pairs/{code}/join", json={"role": "co", "account": "x"}).status_code == 422
    assert client.post(f"/pairs/{code}/join", json={"role": "youth", "account": ""}).status_code == 422

    client.post(f"/pairs/{code}/join", json={"role": "youth", "account": "kid"})
    taken = client.post(f"/pairs/{code}/join", json={"role": "youth", "account": "sibling"})
    assert taken.status_code == 409 and taken.json()["error"] == "RoleTaken"

    client.post(f"/pairs/{code}/join", json={"role": "parent", "account": "mom"})
    used = client.post(f"/pairs/{code}/join", json={"role": "parent", "account": "dad"})
    assert used.status_code == 409 and used.json()["error"] == "CodeUsed"


def test_http_code_expiry(tmp_path):
    _, clock, client = make_service(tmp_path)
    code = client.post("/pairs").json()["code"]
    clock.jump(DEFAULT_CODE_TTL_MS)
    expired = client.post(f"/pairs/{code}/join", json={"role": "youth", "account": "kid"})
    assert expired.status_code == 409
    assert expired.json()["error"] == "CodeExpired"


def test_http_auth_errors(tmp_path):
    _, _, client = make_service(tmp_path)
    pair_id, youth, _ = join_both(client)
    assert client.get(f"/pairs/{pair_id}").status_code == 403
    assert client.get(f"/pairs/{pair_id}", headers={"Authorization": "Token abc"}).status_code == 403
    garbage = client.get(f"/pairs/{pair_id}", headers=bearer("deadbeef"))
    assert garbage.status_code == 403 and garbage.json()["error"] == "RoleError"
    # a valid token scoped to a different pair is a role violation, not a 404
    other_id, other_youth, _ = join_both(client)
    assert other_id != pair_id
    assert client.get(f"/pairs/{pair_id}", headers=other_youth).status_code == 403
    # unknown pair ids 404 before any token question
    assert client.get("/pairs/pair-9999", headers=youth).status_code == 404


def test_guidelines_endpoint_is_public(tmp_path):
    _, _, client = make_service(tmp_path)
    response = client.get("/guidelines")
    assert response.status_code == 200
    assert response.json() == serialize_common(load_default())


# -- service: panels ---------------------------------------------------------


def test_panel_roundtrip_and_revisions(tmp_path):
    _, _, client = make_service(tmp_path)
    pair_id, youth, parent = join_both(client)

    empty = client.get(f"/pairs/{pair_id}/panels/youth", headers=youth).json()
    assert empty == {"role": "youth", "revision": 0, "entries": {}}

    put = client.put(
        f"/pairs/{pair_id}/panels/youth",
        json={"entries": {" Gory  Violence ": -2, "Science": 2}},
        headers=youth,
    )
    assert put.status_code == 200
    assert put.json() == {"role": "youth", "revision": 0, "entries": {"gory violence": -2, "science": 2}}

    again = client.put(f"/pairs/{pair_id}/panels/youth", json={"entries": {"science": 1}}, headers=youth)
    assert again.json()["revision"] == 1
    fetched = client.get(f"/pairs/{pair_id}/panels/youth", headers=parent).json()
    assert fetched == {"role": "youth", "revision": 1, "entries": {"science": 1}}
    # the co panel reads as an empty draft until consensus produces one
    co = client.get(f"/pairs/{pair_id}/panels/co", headers=parent).json()
    assert co == {"role": "co", "revision": 0, "entries": {}}


def test_panel_edit_is_role_guarded(tmp_path):
    _, _, client = make_service(tmp_path)
    pair_id, youth, parent = join_both(client)
    denied = client.put(f"/pairs/{pair_id}/panels/parent", json={"entries": {}}, headers=youth)
    assert denied.status_code == 403 and denied.json()["error"] == "RoleError"
    assert client.put(f"/pairs/{pair_id}/panels/co", json={"entries": {}}, headers=parent).status_code == 422
    assert client.put(f"/pairs/{pair_id}/panels/youth", json={"nope": 1}, headers=youth).status_code == 422
    bad_weight = client.put(f"/pairs/{pair_id}/panels/youth", json={"entries": {"games": 7}}, headers=youth)
    assert bad_weight.status_code == 422


def test_panel_from_videos_inline_scores(tmp_path):
    _, _, client = make_service(tmp_path)
    pair_id, youth, _ = join_both(client)
    response = client.post(
        f"/pairs/{pair_id}/panels/youth/from-videos",
        json={
            "videos": [
                {"label": "suitable", "scores": {"science": 2}},
                {"label": "unsuitable", "scores": {"violence": 2}},
            ]
        },
        headers=youth,
    )
    assert response.status_code == 200
    assert response.json()["entries"] == {"science": 2, "violence": -2}

    bad_score = client.post(
        f"/pairs/{pair_id}/panels/youth/from-videos",
        json={"videos": [{"label": "suitable", "scores": {"science": True}}]},
        headers=youth,
    )
    assert bad_score.status_code == 422
    unanalyzed = client.post(
        f"/pairs/{pair_id}/panels/youth/from-videos",
        json={"videos": [{"label": "suitable", "video_id": "video-9999"}]},
        headers=youth,
    )
    assert unanalyzed.status_code == 422
    bad_label = client.post(
        f"/pairs/{pair_id}/panels/youth/from-videos",
        json={"videos": [{"label": "fine", "scores": {"science": 1}}]},
        headers=youth,
    )
    assert bad_label.status_code == 422


# -- service: consensus ------------------------------------------------------


def test_consensus_accept_over_http(tmp_path):
    store, _, client = make_service(tmp_path)
    pair_id, youth, parent = join_both(client)
    client.put(f"/pairs/{pair_id}/panels/youth", json={"entries": {"music": 1, "violence": -2}}, headers=youth)

    started = client.post(f"/pairs/{pair_id}/consensus", json={}, headers=youth)
    assert started.status_code == 200
    view = started.json()
    assert view["session_id"] == "cs-0001"
    assert view["stage"] == "initial_proposal"
    assert view["initiator"] == "youth" and view["reviewer"] == "parent"
    assert view["viewer"] == "youth"
    # the opening proposal is addressed to the reviewer, so the youth sees nothing yet
    assert view["messages"] == []
    parent_view = client.get("/consensus/cs-0001", headers=parent).json()
    assert [m["template_id"] for m in parent_view["messages"]] == ["present_panel"]
    assert "music" in parent_view["messages"][0]["text"]

    done = client.post("/consensus/cs-0001/respond", json={"decision": "accept"}, headers=parent)
    assert done.status_code == 200
    assert done.json()["stage"] == "finalized"
    assert done.json()["outcome"] == "consensus_reached"
    assert done.json()["co_panel"]["entries"] == {"music": 1, "violence": -2}

    pair_view = client.get(f"/pairs/{pair_id}", headers=youth).json()
    assert pair_view["co_panel"]["entries"] == {"music": 1, "violence": -2}
    assert pair_view["sessions"] == ["cs-0001"]

    twice = client.post("/consensus/cs-0001/respond", json={"decision": "accept"}, headers=parent)
    assert twice.status_code == 409
    # a finalized session no longer blocks starting the next one
    assert client.post(f"/pairs/{pair_id}/consensus", json={}, headers=parent).status_code == 200


def test_consensus_single_active_session(tmp_path):
    _, _, client = make_service(tmp_path)
    pair_id, youth, _ = join_both(client)
    assert client.post(f"/pairs/{pair_id}/consensus", json={}, headers=youth).status_code == 200
    blocked = client.post(f"/pairs/{pair_id}/consensus", json={}, headers=youth)
    assert blocked.status_code == 409 and blocked.json()["error"] == "StateError"


def test_consensus_modify_walk_over_http(tmp_path):
    store, _, client = make_service(tmp_path)
    pair_id, youth, parent = join_both(client)
    client.put(f"/pairs/{pair_id}/panels/youth", json={"entries": {"games": 2, "violence": -2}}, headers=youth)
    sid = client.post(f"/pairs/{pair_id}/consensus", json={}, headers=youth).json()["session_id"]

    # the initiator may not answer their own proposal
    own = client.post(f"/consensus/{sid}/respond", json={"decision": "accept"}, headers=youth)
    assert own.status_code == 403 and own.json()["error"] == "WrongActor"

    modified = client.post(
        f"/consensus/{sid}/respond",
        json={
            "decision": "modify",
            "modifications": [{"keyword": "games", "position": {"kind": "change", "weight": 0}}],
        },
        headers=parent,
    )
    assert modified.status_code == 200
    view = modified.json()
    assert view["stage"] == "self_evaluation"
    assert view["conflicts"] == [
        {
            "keyword": "games",
            "baseline": 2,
            "initiator_position": {"kind": "keep", "weight": None},
            "reviewer_position": {"kind": "change", "weight": 0},
            "resolved": False,
        }
    ]

    # positions are a perspective-taking move; during self-evaluation they conflict
    early = client.post(
        f"/consensus/{sid}/positions",
        json={"keyword": "games", "position": {"kind": "keep"}},
        headers=youth,
    )
    assert early.status_code == 409 and early.json()["error"] == "WrongStage"

    secret = "reasons stay private to the transcript"
    assert (
        client.post(
            f"/consensus/{sid}/reasons",
            json={"keyword": "games", "reason": "screen time limits"},
            headers=parent,
        ).status_code
        == 200
    )
    advanced = client.post(
        f"/consensus/{sid}/reasons", json={"keyword": "games", "reason": secret}, headers=youth
    )
    assert advanced.json()["stage"] == "perspective_taking"

    agreed = client.post(
        f"/consensus/{sid}/positions",
        json={"keyword": "games", "position": {"kind": "change", "weight": 0}},
        headers=youth,
    )
    assert agreed.json()["conflicts"][0]["resolved"] is True

    to_final = client.post(f"/consensus/{sid}/advance", headers=youth)
    assert to_final.json()["stage"] == "final_proposal"
    finished = client.post(f"/consensus/{sid}/advance", headers=parent)
    assert finished.json()["stage"] == "finalized"
    assert finished.json()["outcome"] == "consensus_reached"
    assert finished.json()["co_panel"]["entries"] == {"games": 0, "violence": -2}
    assert client.get(f"/pairs/{pair_id}", headers=parent).json()["co_panel"]["entries"] == {
        "games": 0,
        "violence": -2,
    }

    # each party's reason reaches the other through the transcript, never the event feed
    parent_text = canonical(client.get(f"/consensus/{sid}", headers=parent).json())
    assert secret in parent_text
    youth_text = canonical(client.get(f"/consensus/{sid}", headers=youth).json())
    assert "screen time limits" in youth_text
    events = client.get(f"/pairs/{pair_id}/events", headers=parent)
    dumped = canonical(events.json())
    assert secret not in dumped
    assert "screen time limits" not in dumped
    steps = [e["summary"]["step"] for e in events.json()["events"] if e["kind"] == "consensus"]
    assert steps[0] == "started" and "responded" in steps


def test_consensus_view_filters_by_viewer(tmp_path):
    _, _, client = make_service(tmp_path)
    pair_id, youth, parent = join_both(client)
    client.put(f"/pairs/{pair_id}/panels/youth", json={"entries": {"games": 2}}, headers=youth)
    sid = client.post(f"/pairs/{pair_id}/consensus", json={}, headers=youth).json()["session_id"]
    client.post(
        f"/consensus/{sid}/respond",
        json={
            "decision": "modify",
            "modifications": [{"keyword": "games", "position": {"kind": "drop"}}],
        },
        headers=parent,
    )
    youth_view = client.get(f"/consensus/{sid}", headers=youth).json()
    parent_view = client.get(f"/consensus/{sid}", headers=parent).json()
    assert [m["template_id"] for m in youth_view["messages"]] == ["request_reason"]
    assert [m["template_id"] for m in parent_view["messages"]] == ["present_panel", "request_reason"]
    for view in (youth_view, parent_view):
        for conflict in view["conflicts"]:
            assert set(conflict) == {
                "keyword",
                "baseline",
                "initiator_position",
                "reviewer_position",
                "resolved",
            }
    # tokens from another pair cannot read the session at all
    _, outsider, _ = join_both(client)
    assert client.get(f"/consensus/{sid}", headers=outsider).status_code == 403
    assert client.get("/consensus/cs-9999", headers=youth).status_code == 404


# -- service: censorship, feedback, reports ---------------------------------


def test_video_censor_feedback_report_walk(tmp_path, bundle_dir):
    store, _, client = make_service(tmp_path)
    pair_id, youth, parent = join_both(client)
    run_accept_session(client, pair_id, youth, parent, {"science": 2, "violence": -2})

    registered = client.post(
        f"/pairs/{pair_id}/videos", json={"bundle_ref": str(bundle_dir)}, headers=youth
    )
    assert registered.status_code == 200
    vid = registered.json()["video_id"]
    assert vid == "video-0001"
    assert registered.json()["submitted_by"] == "youth"

    # feedback only exists once a censorship pass has run
    assert client.get(f"/videos/{vid}/feedback", headers=parent).status_code == 404

    result = client.post(f"/videos/{vid}/censor", headers=parent)
    assert result.status_code == 200
    body = result.json()
    assert body["video_id"] == vid
    assert body["provider_id"] == "mock"
    assert body["age_band"] in {b.name for b in load_default().age_bands}
    assert body["features"]["scores"], "mock provider should score the panel keywords"

    feedback = client.get(f"/videos/{vid}/feedback", headers=youth)
    assert feedback.status_code == 200
    entries = feedback.json()["entries"]
    assert sorted(e["keyword"] for e in entries) == ["science", "violence"]
    for entry in entries:
        assert entry["classification"] in {"aligned", "misaligned", "informational"}
    produced_at = feedback.json()["produced_at"]

    report = client.get(
        f"/pairs/{pair_id}/reports",
        params={"from": produced_at, "to": produced_at + 1000},
        headers=parent,
    )
    assert report.status_code == 200
    assert report.json()["video_count"] == 1
    assert set(report.json()["per_keyword"]) == {"science", "violence"}

    empty = client.get(
        f"/pairs/{pair_id}/reports",
        params={"from": produced_at + 1000, "to": produced_at + 2000},
        headers=parent,
    )
    assert empty.json()["video_count"] == 0
    assert client.get(f"/pairs/{pair_id}/reports", headers=parent).status_code == 422

    events = client.get(f"/pairs/{pair_id}/events", headers=parent).json()
    censored = [e for e in events["events"] if e["kind"] == "censored"]
    assert len(censored) == 1
    assert censored[0]["summary"]["video_id"] == vid
    assert censored[0]["summary"]["age_band"] == body["age_band"]
    # transcript text from the video never surfaces in the event feed
    assert "science club where every experiment" not in canonical(events)
    seqs = [e["seq"] for e in events["events"]]
    assert seqs == list(range(len(seqs)))


def test_video_errors(tmp_path, bundle_dir):
    _, _, client = make_service(tmp_path)
    pair_id, youth, _ = join_both(client)
    assert client.post(f"/pairs/{pair_id}/videos", json={}, headers=youth).status_code == 422
    assert (
        client.post(f"/pairs/{pair_id}/videos", json={"bundle_ref": "", "video_id": "v"}, headers=youth).status_code
        == 422
    )
    client.post(f"/pairs/{pair_id}/videos", json={"bundle_ref": str(bundle_dir), "video_id": "v1"}, headers=youth)
    duplicate = client.post(
        f"/pairs/{pair_id}/videos", json={"bundle_ref": str(bundle_dir), "video_id": "v1"}, headers=youth
    )
    assert duplicate.status_code == 409
    assert client.post("/videos/ghost/censor", headers=youth).status_code == 404
    # a censor call needs a token from the owning pair
    _, outsider, _ = join_both(client)
    assert client.post("/videos/v1/censor", headers=outsider).status_code == 403
    assert client.get("/videos/v1/feedback", headers=outsider).status_code == 403


# -- service: restart --------------------------------------------------------


def test_service_restart_preserves_every_view(tmp_path, bundle_dir):
    store, clock, client = make_service(tmp_path)
    pair_id, youth, parent = join_both(client)
    sid = run_accept_session(client, pair_id, youth, parent, {"science": 2, "violence": -2})
    vid = client.post(f"/pairs/{pair_id}/videos", json={"bundle_ref": str(bundle_dir)}, headers=youth).json()[
        "video_id"
    ]
    client.post(f"/videos/{vid}/censor", headers=youth)
    produced_at = client.get(f"/videos/{vid}/feedback", headers=youth).json()["produced_at"]

    reads = [
        ("get", f"/pairs/{pair_id}", youth, None),
        ("get", f"/pairs/{pair_id}/panels/youth", parent, None),
        ("get", f"/pairs/{pair_id}/panels/parent", youth, None),
        ("get", f"/pairs/{pair_id}/panels/co", youth, None),
        ("get", f"/consensus/{sid}", youth, None),
        ("get", f"/consensus/{sid}", parent, None),
        ("get", f"/videos/{vid}/feedback", parent, None),
        ("get", f"/pairs/{pair_id}/reports", parent, {"from": produced_at, "to": produced_at + 10}),
        ("get", f"/pairs/{pair_id}/events", parent, None),
        ("get", "/guidelines", {}, None),
    ]
    before = [client.get(path, headers=headers, params=params).json() for _, path, headers, params in reads]

    reopened = Store(tmp_path / "data")
    fresh = TestClient(create_app(reopened, clock=clock, rng=random.Random(77)))
    after = [fresh.get(path, headers=headers, params=params).json() for _, path, headers, params in reads]
    assert canonical(after) == canonical(before)


# -- config loading and status mapping ---------------------------------------


def test_status_for_ordering():
    assert status_for(UnknownCode("x")) == 404
    assert status_for(CodeExpired("x")) == 409
    assert status_for(RoleError("x")) == 403
    assert status_for(ValidationError("x")) == 422
    assert status_for(CoviewError("x")) == 500


def test_load_service_config(tmp_path):
    path = tmp_path / "service.json"
    path.write_text(
        json.dumps(
            {
                "port": 9001,
                "data_dir": str(tmp_path / "data"),
                "provider": {"kind": "mock"},
                "consensus": {"max_iterations": 5, "session_timeout": 1000},
                "ingest": {"chunk_budget": 4000},
            }
        ),
        encoding="utf-8",
    )
    cfg = load_service_config(path)
    assert cfg.port == 9001
    assert cfg.provider.kind.value == "mock"
    assert cfg.provider.lexicon_path  # mock fills in the packaged lexicon
    assert cfg.consensus.max_iterations == 5
    assert cfg.ingest.chunk_budget == 4000
    assert cfg.host == "127.0.0.1"

    with pytest.raises(ValidationError):
        load_service_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("[]", encoding="utf-8")
    with pytest.raises(ValidationError):
        load_service_config(bad)
    bad.write_text("{nope", encoding="utf-8")
    with pytest.raises(ValidationError):
        load_service_config(bad)
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"provider": {"kind": "quantum"}}), encoding="utf-8")
    with pytest.raises(ValidationError):
        load_service_config(unknown)


def test_default_service_config_builds():
    cfg = ServiceConfig()
    assert cfg.provider.kind.value == "mock"
    assert cfg.guideline_set().band_names() == [b.name for b in load_default().age_bands]
