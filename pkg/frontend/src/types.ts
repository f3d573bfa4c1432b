// JSON payload shapes of the service API, mirrored verbatim. The client
// renders these as-is: no means, labels, or classifications are ever
// recomputed on this side.

export type Role = "parent" | "youth";
export type PanelRole = Role | "co";

export type Weight = -2 | -1 | 0 | 1 | 2;

export const WEIGHT_LABELS: ReadonlyMap<Weight, string> = new Map([
  [-2, "strongly dislike"],
  [-1, "dislike"],
  [0, "neutral"],
  [1, "like"],
  [2, "strongly like"],
]);

export interface PanelDoc {
  role: PanelRole;
  revision: number;
  entries: Record<string, number>;
}

export interface PairCreated {
  pair_id: string;
  code: string;
  created_at: number;
  ttl: number;
}

export interface JoinResult {
  pair_id: string;
  role: Role;
  token: string;
  complete: boolean;
}

export interface PairView {
  pair_id: string;
  complete: boolean;
  accounts: Record<string, string>;
  sessions: string[];
  co_panel: PanelDoc | null;
}

export type Stage =
  | "initial_proposal"
  | "self_evaluation"
  | "perspective_taking"
  | "final_proposal"
  | "finalized";

export type PositionKind = "keep" | "change" | "drop";

export interface PositionDoc {
  kind: PositionKind;
  weight?: number | null;
}

export interface ConflictView {
  keyword: string;
  baseline: number | null;
  initiator_position: PositionDoc;
  reviewer_position: PositionDoc;
  resolved: boolean;
}

export interface MessageView {
  seq: number;
  stage: Stage;
  template_id: string;
  text: string;
}

export interface SessionView {
  session_id: string;
  stage: Stage;
  iteration: number;
  outcome: "consensus_reached" | "consensus_failed" | null;
  initiator: Role;
  reviewer: Role;
  viewer: Role;
  deadline: number;
  config: { max_iterations: number; session_timeout: number };
  draft_panel: PanelDoc;
  co_panel: PanelDoc | null;
  conflicts: ConflictView[];
  messages: MessageView[];
}

export type Classification = "aligned" | "misaligned" | "informational";

export interface FeedbackEntry {
  keyword: string;
  pref_weight: number;
  video_score: number;
  classification: Classification;
}

export interface RiskFindingDoc {
  category: string;
  level: string;
  rationale: string;
}

export interface AppropriatenessFindingDoc {
  category: string;
  value: number;
  rationale: string;
}

export interface CommonFindings {
  age_band: string;
  risks: RiskFindingDoc[];
  appropriateness: AppropriatenessFindingDoc[];
  summary: string;
}

export interface FeedbackDoc {
  video_id: string;
  entries: FeedbackEntry[];
  common: CommonFindings;
  produced_at: number;
}

export interface KeywordSummaryDoc {
  mean_score: number;
  pref_weight: number;
  display_label: string;
  classification: Classification;
}

export interface ReportDoc {
  period: { from: number; to: number; bucket: number };
  per_keyword: Record<string, KeywordSummaryDoc>;
  risk_frequency: Record<string, number>;
  risk_trend: Record<string, number[]>;
  video_count: number;
}

export interface VideoRegistered {
  video_id: string;
  pair_id: string;
  bundle_ref: string;
  submitted_by: Role;
}

export interface EventView {
  seq: number;
  actor: string;
  kind: string;
  at: number;
  summary: Record<string, unknown>;
}
