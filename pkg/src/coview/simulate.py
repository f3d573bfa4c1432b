"""Scripted-agent harness for measuring consensus-session statistics.

Two parameterized policies play the initiator and reviewer through the
real state machine. The harness reports the consensus rate, the mean
number of one-party turns (state-changing submissions a party makes to
the mediator), and the mean number of cross-party exchanges (mediator
messages that relay one party's reason or position to the other).
Everything is driven by one seeded RNG, so runs are bit-reproducible.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from . import consensus as cs
from .errors import ValidationError
from .preference import PreferencePanel, Role, new_panel

KEYWORD_POOL = (
    "science", "music", "games", "anime", "sports", "history", "cooking",
    "travel", "nature", "coding", "dance", "movies", "news", "art", "space",
    "cars", "fashion", "pets", "comedy", "violence",
)

# Mediator messages that carry one party's content to the other. The
# initial panel presentation is not counted: an accepted proposal ends the
# session with zero exchanges.
CROSS_PARTY_TEMPLATES = ("cross_present", "re_present")


@dataclass(frozen=True)
class AgentPolicy:
    accept_probability: float = 0.0
    compromise_probability: float = 0.5
    panel_size: tuple[int, int] = (2, 5)

    def __post_init__(self):
        for name in ("accept_probability", "compromise_probability"):
            p = getattr(self, name)
            if not (0.0 <= p <= 1.0):
                raise ValidationError(f"{name} must be in [0, 1]")
        lo, hi = self.panel_size
        if not (0 <= lo <= hi <= len(KEYWORD_POOL)):
            raise ValidationError(f"panel_size must satisfy 0 <= lo <= hi <= {len(KEYWORD_POOL)}")


@dataclass(frozen=True)
class SimulationStats:
    sessions: int
    reached: int
    consensus_rate: float
    mean_one_party_turns: float
    mean_cross_party_exchanges: float
    mean_iterations: float

    def to_dict(self) -> dict:
        return {
            "sessions": self.sessions,
            "reached": self.reached,
            "consensus_rate": self.consensus_rate,
            "mean_one_party_turns": self.mean_one_party_turns,
            "mean_cross_party_exchanges": self.mean_cross_party_exchanges,
            "mean_iterations": self.mean_iterations,
        }


def _random_panel(rng: random.Random, policy: AgentPolicy, role: Role) -> PreferencePanel:
    lo, hi = policy.panel_size
    size = rng.randint(lo, hi)
    keywords = rng.sample(KEYWORD_POOL, size)
    return new_panel(role, {kw: rng.randint(-2, 2) for kw in keywords})


def _random_modifications(rng: random.Random, panel: PreferencePanel) -> list[tuple[str, cs.Position]]:
    changes: list[tuple[str, cs.Position]] = []
    existing = sorted(panel.entries)
    if existing:
        count = rng.randint(1, min(3, len(existing)))
        for kw in rng.sample(existing, count):
            current = panel.entries[kw]
            if rng.random() < 0.7:
                new_weight = rng.choice([w for w in (-2, -1, 0, 1, 2) if w != current])
                changes.append((kw, cs.change(new_weight)))
            else:
                changes.append((kw, cs.drop()))
    unused = [kw for kw in KEYWORD_POOL if kw not in panel.entries]
    if unused and (not existing or rng.random() < 0.25):
        changes.append((rng.choice(unused), cs.change(rng.randint(-2, 2))))
    return changes


def _adopt_counterpart(session: cs.ConsensusSession, actor: Role, conflict: cs.Conflict) -> cs.Position:
    other_position = (
        conflict.reviewer_position if actor is session.initiator else conflict.initiator_position
    )
    kind, weight = cs.canonical_position(other_position, conflict.baseline)
    return cs.change(weight) if kind == "change" else cs.drop()


def run_session(
    rng: random.Random,
    initiator_policy: AgentPolicy,
    reviewer_policy: AgentPolicy,
    cfg: cs.ConsensusConfig,
    session_id: str,
) -> tuple[cs.ConsensusSession, int]:
    """Drive one scripted session; returns (finalized session, one-party turns)."""
    initiator, reviewer = Role.YOUTH, Role.PARENT
    panel = _random_panel(rng, initiator_policy, initiator)
    session = cs.start_session(initiator, panel, cfg, session_id=session_id, at=0)
    turns = 1  # providing the panel

    if rng.random() < reviewer_policy.accept_probability:
        cs.reviewer_respond(session, reviewer, cs.Accept())
        return session, turns + 1
    mods = _random_modifications(rng, panel)
    cs.reviewer_respond(session, reviewer, cs.Modify(tuple(mods)))
    turns += 1

    for kw in sorted(session.conflicts):
        cs.submit_reason(session, initiator, kw, f"I set {kw} that way because it matters to me")
        turns += 1
        cs.submit_reason(session, reviewer, kw, f"I proposed changing {kw} because of how we use videos")
        turns += 1

    guard = 0
    while session.stage is not cs.Stage.FINALIZED:
        guard += 1
        if guard > 10 * cfg.max_iterations + 10:
            raise RuntimeError("scripted session failed to terminate")
        if session.stage is cs.Stage.PERSPECTIVE_TAKING:
            for actor, policy in ((initiator, initiator_policy), (reviewer, reviewer_policy)):
                for kw in sorted(session.conflicts):
                    conflict = session.conflicts[kw]
                    if conflict.resolved:
                        continue
                    if rng.random() < policy.compromise_probability:
                        cs.submit_position(session, actor, kw, _adopt_counterpart(session, actor, conflict))
                        turns += 1
        cs.advance(session)
    return session, turns


def simulate(
    policy_a: AgentPolicy,
    policy_b: AgentPolicy,
    n: int,
    seed: int,
    cfg: cs.ConsensusConfig = cs.ConsensusConfig(),
) -> SimulationStats:
    """Run n scripted sessions; policy_a initiates, policy_b reviews."""
    if n < 1:
        raise ValidationError("need at least one session")
    rng = random.Random(seed)
    reached = 0
    total_turns = 0
    total_cross = 0
    total_iterations = 0
    for i in range(n):
        session, turns = run_session(rng, policy_a, policy_b, cfg, session_id=f"sim-{i}")
        _, outcome = cs.finalize(session)
        if outcome is cs.Outcome.REACHED:
            reached += 1
        total_turns += turns
        total_cross += sum(1 for m in session.transcript if m.template_id in CROSS_PARTY_TEMPLATES)
        total_iterations += session.iteration
    return SimulationStats(
        sessions=n,
        reached=reached,
        consensus_rate=reached / n,
        mean_one_party_turns=total_turns / n,
        mean_cross_party_exchanges=total_cross / n,
        mean_iterations=total_iterations / n,
    )


def format_stats(stats: SimulationStats) -> str:
    return (
        f"sessions: {stats.sessions}\n"
        f"consensus rate: {stats.consensus_rate:.3f}\n"
        f"mean one-party turns: {stats.mean_one_party_turns:.2f}\n"
        f"mean cross-party exchanges: {stats.mean_cross_party_exchanges:.2f}\n"
        f"mean iterations: {stats.mean_iterations:.2f}"
    )
