/* Wire types for the advisor service JSON API.  Field names mirror the
   server payloads exactly; everything here is display data, never
   recomputed on the client. */

export interface CardInfo {
  card_id: string;
  elixir_cost: number;
  func_type: string;
}

export type Outcome = "win" | "loss";

export interface MatchPayload {
  deck: string[];
  outcome: Outcome;
  crown_diff: number;
  mode: string;
}

export interface MatchAck {
  ok: boolean;
  match_count: number;
}

export interface CandidateScore {
  to_state: number;
  name: string;
  adoptability: number;
  norm_adopt: number;
  quality: number;
  fused: number;
}

export type Provenance =
  | "persona_gate"
  | "timing_gate"
  | "no_candidates"
  | "fusion"
  | "insufficient_history";

export interface AdvicePayload {
  decision: "stay" | "switch" | null;
  target_state: number | null;
  target_name: string | null;
  gate_prob: number | null;
  candidates: CandidateScore[];
  provenance: Provenance;
  explanation: string;
  need_matches: number;
  match_count: number;
  subtype: number | null;
  subtype_provisional: boolean;
  from_state?: number;
  from_name?: string;
}

export interface SessionMatch {
  timestamp: number;
  deck: string[];
  outcome: Outcome;
  crown_diff: number;
  mode: string;
}

export interface SessionSnapshot {
  session_id: string;
  match_count: number;
  matches: SessionMatch[];
  subtype: number | null;
  subtype_provisional: boolean;
  last_advice: AdvicePayload | null;
}

export interface HealthInfo {
  status: "ok" | "degraded";
  models_loaded: boolean;
  sessions: number;
}
