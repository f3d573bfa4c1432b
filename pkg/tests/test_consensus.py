"""Consensus state machine: stage walkthroughs, mediator transcript, replay."""

import json

import pytest

from coview.consensus import (
    DEFAULT_MAX_ITERATIONS,
    DEFAULT_SESSION_TIMEOUT_MS,
    NO_REASON_SENTINEL,
    Accept,
    ConsensusConfig,
    EmptyModification,
    InvalidRole,
    Modify,
    NoSuchConflict,
    NotFinalized,
    Outcome,
    Position,
    PositionKind,
    Stage,
    WrongActor,
    WrongStage,
    advance,
    canonical_position,
    change,
    drop,
    export_events,
    finalize,
    keep,
    load_template_catalog,
    render_message,
    replay_session,
    reviewer_respond,
    session_snapshot,
    start_session,
    submit_position,
    submit_reason,
)
from coview.errors import ValidationError
from coview.preference import Role, new_panel


def youth_session(entries=None, cfg=ConsensusConfig(), at=0):
    return start_session(Role.YOUTH, new_panel(Role.YOUTH, entries or {}), cfg, at=at)


# --- positions -------------------------------------------------------------


def test_position_validation():
    assert change(2).weight == 2
    with pytest.raises(ValidationError):
        change(3)
    with pytest.raises(ValidationError):
        Position(PositionKind.KEEP, 1)
    with pytest.raises(ValidationError):
        Position(PositionKind.DROP, 0)


def test_canonical_position_keep_equivalence():
    # Keep == Change(baseline) when the keyword exists, Drop when it does not
    assert canonical_position(keep(), 2) == ("change", 2)
    assert canonical_position(keep(), None) == ("drop", None)
    assert canonical_position(change(0), 2) == ("change", 0)
    assert canonical_position(drop(), 2) == ("drop", None)


def test_config_validation():
    assert ConsensusConfig().max_iterations == DEFAULT_MAX_ITERATIONS == 3
    assert ConsensusConfig().session_timeout == DEFAULT_SESSION_TIMEOUT_MS == 600_000
    with pytest.raises(ValidationError):
        ConsensusConfig(max_iterations=0)
    with pytest.raises(ValidationError):
        ConsensusConfig(session_timeout=0)


# --- opening ---------------------------------------------------------------


def test_start_session_examples():
    s = youth_session({"anime": 2})
    assert s.stage is Stage.INITIAL_PROPOSAL
    assert s.transcript[0].addressee is Role.PARENT  # [PAPER: youth initiates]
    assert s.transcript[0].template_id == "present_panel"
    assert s.draft_panel.entries == {"anime": 2}

    empty = start_session(Role.PARENT, new_panel(Role.PARENT))
    assert empty.stage is Stage.INITIAL_PROPOSAL and empty.draft_panel.entries == {}

    with pytest.raises(InvalidRole):
        start_session(Role.CO, new_panel(Role.CO))


def test_deadline_from_config():
    s = youth_session(at=1000)
    assert s.started_at == 1000 and s.deadline == 1000 + 600_000


# --- accept path -----------------------------------------------------------


def test_accept_immediate_consensus():
    s = youth_session({"anime": 2})
    reviewer_respond(s, Role.PARENT, Accept())
    assert s.stage is Stage.FINALIZED and s.outcome is Outcome.REACHED
    panel, outcome = finalize(s)
    assert outcome is Outcome.REACHED
    assert panel.role is Role.CO
    assert panel.entries == {"anime": 2}  # [TRIVIAL: accept-path fidelity]
    # idempotent
    assert finalize(s) == (panel, outcome)


def test_respond_guards():
    s = youth_session({"anime": 2})
    with pytest.raises(WrongActor):
        reviewer_respond(s, Role.YOUTH, Accept())  # initiator may not review
    reviewer_respond(s, Role.PARENT, Accept())
    with pytest.raises(WrongStage):
        reviewer_respond(s, Role.PARENT, Accept())  # [TRIVIAL: second respond]
    with pytest.raises(NotFinalized):
        finalize(youth_session({"a": 1}))


def test_modify_restating_the_draft_is_empty():
    s = youth_session({"anime": 2})
    with pytest.raises(EmptyModification):
        reviewer_respond(s, Role.PARENT, Modify(changes=()))
    with pytest.raises(EmptyModification):
        # Change(current), Keep, and Drop-of-absent all restate the status quo
        reviewer_respond(
            s,
            Role.PARENT,
            Modify(changes=(("anime", change(2)), ("anime", keep()), ("absent", drop()))),
        )


# --- modify path -----------------------------------------------------------


def test_modify_opens_conflicts():
    s = youth_session({"anime": 2})
    reviewer_respond(s, Role.PARENT, Modify(changes=(("anime", change(0)),)))
    assert s.stage is Stage.SELF_EVALUATION  # [DERIVED]
    assert len(s.conflicts) == 1
    c = s.conflicts["anime"]
    assert c.baseline == 2
    assert c.initiator_position == keep() and c.reviewer_position == change(0)
    assert not c.resolved
    # reason requests go to both parties
    requests = [m for m in s.transcript if m.template_id == "request_reason"]
    assert {m.addressee for m in requests} == {Role.PARENT, Role.YOUTH}


def test_modify_new_keyword_means_initiator_drop():
    s = youth_session({"anime": 2})
    reviewer_respond(s, Role.PARENT, Modify(changes=(("violence", change(-2)),)))
    c = s.conflicts["violence"]
    assert c.baseline is None
    assert c.initiator_position == drop()  # initiator never had it


def test_reasons_complete_moves_to_perspective_taking():
    s = youth_session({"anime": 2})
    reviewer_respond(s, Role.PARENT, Modify(changes=(("anime", change(0)),)))
    submit_reason(s, Role.YOUTH, "anime", "my friends all watch it")
    assert s.stage is Stage.SELF_EVALUATION  # one side still pending
    submit_reason(s, Role.PARENT, "anime", "   ")
    assert s.stage is Stage.PERSPECTIVE_TAKING  # [DERIVED: completeness rule]
    assert s.conflicts["anime"].reviewer_reason == NO_REASON_SENTINEL  # [TRIVIAL]
    assert NO_REASON_SENTINEL == "(no reason given)"
    cross = [m for m in s.transcript if m.template_id == "cross_present"]
    assert len(cross) == 2  # each party sees the other's side
    youth_view = next(m for m in cross if m.addressee is Role.YOUTH)
    assert youth_view.payload["counterpart_reason"] == NO_REASON_SENTINEL


def test_reason_guards():
    s = youth_session({"anime": 2})
    with pytest.raises(WrongStage):
        submit_reason(s, Role.YOUTH, "anime", "too early")
    reviewer_respond(s, Role.PARENT, Modify(changes=(("anime", change(0)),)))
    with pytest.raises(NoSuchConflict):
        submit_reason(s, Role.YOUTH, "games", "unconflicted")  # [TRIVIAL]
    with pytest.raises(WrongActor):
        submit_reason(s, Role.CO, "anime", "not a party")


def in_perspective_taking(entries, changes):
    s = youth_session(entries)
    reviewer_respond(s, Role.PARENT, Modify(changes=changes))
    for kw in list(s.conflicts):
        submit_reason(s, Role.YOUTH, kw, f"youth about {kw}")
        submit_reason(s, Role.PARENT, kw, f"parent about {kw}")
    assert s.stage is Stage.PERSPECTIVE_TAKING
    return s


def test_position_resolution():
    s = in_perspective_taking({"anime": 2}, (("anime", change(0)),))
    submit_position(s, Role.YOUTH, "anime", change(0))  # [DERIVED: matches reviewer]
    assert s.conflicts["anime"].resolved
    assert s.changed_this_round
    with pytest.raises(NoSuchConflict):
        submit_position(s, Role.YOUTH, "anime", change(1))  # [TRIVIAL: already resolved]


def test_position_guards():
    s = youth_session({"anime": 2})
    with pytest.raises(WrongStage):
        submit_position(s, Role.YOUTH, "anime", change(0))
    reviewer_respond(s, Role.PARENT, Modify(changes=(("anime", change(0)),)))
    with pytest.raises(WrongStage):
        submit_position(s, Role.YOUTH, "anime", change(0))  # still collecting reasons


def test_reviewer_backing_down_with_keep_resolves():
    s = in_perspective_taking({"anime": 2}, (("anime", change(0)),))
    submit_position(s, Role.PARENT, "anime", keep())  # Keep == Change(2) here
    assert s.conflicts["anime"].resolved
    assert s.changed_this_round


def test_restating_own_position_does_not_count_as_change():
    s = in_perspective_taking({"anime": 2}, (("anime", change(0)),))
    submit_position(s, Role.YOUTH, "anime", change(2))  # Change(baseline) == Keep
    assert not s.changed_this_round
    assert not s.conflicts["anime"].resolved


def test_full_modify_walkthrough_to_consensus():
    s = youth_session({"anime": 2, "games": 1}, at=0)
    reviewer_respond(s, Role.PARENT, Modify(changes=(("anime", change(0)), ("violence", change(-2)))))
    for kw in ("anime", "violence"):
        submit_reason(s, Role.YOUTH, kw, f"youth on {kw}")
        submit_reason(s, Role.PARENT, kw, f"parent on {kw}")
    submit_position(s, Role.YOUTH, "anime", change(1))
    submit_position(s, Role.PARENT, "anime", change(1))
    submit_position(s, Role.YOUTH, "violence", change(-2))
    assert all(c.resolved for c in s.conflicts.values())
    advance(s)
    assert s.stage is Stage.FINAL_PROPOSAL
    advance(s)
    assert s.stage is Stage.FINALIZED and s.outcome is Outcome.REACHED
    panel, outcome = finalize(s)
    # resolution soundness: draft reflects exactly the agreed positions
    assert panel.entries == {"anime": 1, "games": 1, "violence": -2}
    assert s.iteration == 0


def test_failure_at_iteration_cap():
    cfg = ConsensusConfig(max_iterations=2)
    s = youth_session({"anime": 2}, cfg=cfg)
    reviewer_respond(s, Role.PARENT, Modify(changes=(("anime", change(0)),)))
    submit_reason(s, Role.YOUTH, "anime", "r1")
    submit_reason(s, Role.PARENT, "anime", "r2")
    advance(s)  # no change -> iteration 1, re-present
    assert s.stage is Stage.PERSPECTIVE_TAKING and s.iteration == 1
    assert any(m.template_id == "re_present" for m in s.transcript)
    advance(s)  # iteration 2 hits the cap
    assert s.stage is Stage.FINALIZED and s.outcome is Outcome.FAILED
    panel, outcome = finalize(s)
    assert outcome is Outcome.FAILED
    assert panel.entries == {"anime": 2}  # [DERIVED: co-panel = untouched draft]


def test_final_proposal_loop_back_shares_budget():
    cfg = ConsensusConfig(max_iterations=2)
    s = youth_session({"anime": 2, "games": 1}, cfg=cfg)
    reviewer_respond(s, Role.PARENT, Modify(changes=(("anime", change(0)), ("games", drop()))))
    for kw in ("anime", "games"):
        submit_reason(s, Role.YOUTH, kw, "y")
        submit_reason(s, Role.PARENT, kw, "p")
    submit_position(s, Role.YOUTH, "anime", change(0))  # resolves one of two
    advance(s)
    assert s.stage is Stage.FINAL_PROPOSAL
    advance(s)  # unresolved conflict sends it back, burning an iteration
    assert s.stage is Stage.PERSPECTIVE_TAKING and s.iteration == 1
    advance(s)  # quiet round -> iteration 2 = cap -> failure
    assert s.outcome is Outcome.FAILED
    # failure-path stability: partial resolution was never applied
    assert finalize(s)[0].entries == {"anime": 2, "games": 1}


def test_timeout_fires_on_advance():
    cfg = ConsensusConfig(session_timeout=5000)
    s = youth_session({"anime": 2}, cfg=cfg, at=1000)
    assert s.deadline == 6000
    reviewer_respond(s, Role.PARENT, Modify(changes=(("anime", change(0)),)))
    advance(s, at=6000)  # exactly at the deadline is still in time
    assert s.stage is Stage.SELF_EVALUATION
    advance(s, at=6001)
    assert s.stage is Stage.FINALIZED and s.outcome is Outcome.FAILED  # [PAPER]
    assert finalize(s)[0].entries == {"anime": 2}


def test_advance_is_a_waiting_noop_in_early_stages():
    s = youth_session({"anime": 2})
    advance(s)
    assert s.stage is Stage.INITIAL_PROPOSAL
    reviewer_respond(s, Role.PARENT, Modify(changes=(("anime", change(0)),)))
    advance(s)
    assert s.stage is Stage.SELF_EVALUATION
    with pytest.raises(WrongStage):
        reviewer_respond(s, Role.PARENT, Accept())


def test_advance_rejected_after_finalized():
    s = youth_session({"anime": 2})
    reviewer_respond(s, Role.PARENT, Accept())
    with pytest.raises(WrongStage):
        advance(s)


# --- transcript and templates ----------------------------------------------


def test_every_message_renders_from_the_catalog():
    catalog = load_template_catalog()
    s = youth_session({"anime": 2, "games": 1})
    reviewer_respond(s, Role.PARENT, Modify(changes=(("anime", change(0)),)))
    submit_reason(s, Role.YOUTH, "anime", "because")
    submit_reason(s, Role.PARENT, "anime", "why not")
    advance(s)  # quiet round: re-present
    submit_position(s, Role.YOUTH, "anime", change(0))
    advance(s)
    advance(s)
    assert s.outcome is Outcome.REACHED
    assert len(s.transcript) >= 6
    for msg in s.transcript:
        text = render_message(msg, catalog)
        assert text and "{" not in text  # every slot filled


def test_transcript_append_only_and_grouped():
    s = youth_session({"anime": 2})
    seen = list(s.transcript)
    reviewer_respond(s, Role.PARENT, Modify(changes=(("anime", change(0)),)))
    assert s.transcript[: len(seen)] == seen
    grouped = s.pending_messages()
    seqs = [m["seq"] for ms in grouped.values() for m in ms]
    assert sorted(seqs) == list(range(len(s.transcript)))


# --- export and replay -----------------------------------------------------


def scripted_session(accept=False):
    s = youth_session({"anime": 2, "games": 1}, at=500)
    if accept:
        reviewer_respond(s, Role.PARENT, Accept(), at=700)
        return s
    reviewer_respond(s, Role.PARENT, Modify(changes=(("anime", change(0)), ("violence", change(-1)))), at=800)
    submit_reason(s, Role.YOUTH, "anime", "love it", at=900)
    submit_reason(s, Role.PARENT, "anime", "", at=950)
    submit_reason(s, Role.YOUTH, "violence", "fine in games", at=960)
    submit_reason(s, Role.PARENT, "violence", "nightmares", at=970)
    submit_position(s, Role.YOUTH, "anime", change(0), at=1000)
    submit_position(s, Role.YOUTH, "violence", change(-1), at=1100)
    advance(s, at=1200)
    advance(s, at=1300)
    return s


@pytest.mark.parametrize("accept", [True, False])
def test_replay_reproduces_state(accept):
    s = scripted_session(accept=accept)
    stored = [json.loads(json.dumps(e)) for e in export_events(s)]
    replayed = replay_session(stored)
    assert session_snapshot(replayed) == session_snapshot(s)


def test_replay_requires_started_first():
    s = scripted_session(accept=True)
    events = export_events(s)
    with pytest.raises(ValidationError):
        replay_session(events[1:])
    with pytest.raises(ValidationError):
        replay_session([])


def test_snapshot_captures_outcome_fields():
    s = scripted_session(accept=False)
    snap = session_snapshot(s)
    assert snap["stage"] == "finalized"
    assert snap["outcome"] == "consensus_reached"
    assert snap["co_panel"]["entries"] == {"anime": 0, "games": 1, "violence": -1}
    assert snap["co_panel"]["role"] == "co"
