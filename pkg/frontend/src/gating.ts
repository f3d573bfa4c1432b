// Stage gating for the consensus controls. A control is enabled exactly
// when the corresponding API call would not be refused with 409 for the
// session in this snapshot; role-scoped controls additionally hide when
// the viewer is the wrong party (that refusal would be a 403).

import type { PairView, SessionView } from "./types";

export interface ConsensusGate {
  /** Accept / Modify buttons: reviewer answering the initial proposal. */
  respond: boolean;
  /** Reason box: collected during self-evaluation and perspective-taking. */
  reason: boolean;
  /** Keep/Change/Drop picker: a perspective-taking move. */
  position: boolean;
  /** "Continue" control: meaningful until the session is finalized. */
  advance: boolean;
}

export function controlsFor(view: SessionView): ConsensusGate {
  const openConflicts = view.conflicts.some((c) => !c.resolved);
  const reasonStage = view.stage === "self_evaluation" || view.stage === "perspective_taking";
  return {
    respond: view.stage === "initial_proposal" && view.viewer === view.reviewer,
    reason: reasonStage && openConflicts,
    position: view.stage === "perspective_taking" && openConflicts,
    advance: view.stage !== "finalized",
  };
}

/** Starting a new session conflicts (409) while any session is unfinished. */
export function canStartConsensus(pair: PairView, sessions: SessionView[]): boolean {
  const known = new Set(sessions.map((s) => s.session_id));
  for (const id of pair.sessions) {
    if (!known.has(id)) return false; // unknown state: do not offer the call
  }
  return sessions.every((s) => s.stage === "finalized");
}

/** Open conflicts a party may still speak to; pickers list only these. */
export function actionableConflicts(view: SessionView): string[] {
  return view.conflicts.filter((c) => !c.resolved).map((c) => c.keyword);
}
