// Payload shapes of the review HTTP API.

export type Verdict = "accept" | "reject" | "edited";

export interface Highlight {
  start: number;
  end: number;
}

export interface CandidateCard {
  candidate_id: string;
  text: string;
  chunk_index: number;
  non_verbatim: boolean;
  chunk_text: string;
  highlight: Highlight | null;
}

export interface SessionSummary {
  session_id: string;
  annotator_id: string;
  state: "open" | "submitted";
}

export interface ProtocolInfo {
  name: string;
  chunks: number;
  candidates: number;
  sessions: SessionSummary[];
}

export interface DecisionRecord {
  verdict: Verdict;
  text: string | null;
  ts: number;
}

export interface SessionState {
  session_id: string;
  protocol: string;
  annotator_id: string;
  state: "open" | "submitted";
  decisions: Record<string, DecisionRecord>;
  manual_spans: { span_id: string; text: string; ts: number }[];
  progress: { decided: number; total: number };
}

export interface IaaRow {
  protocol: string;
  a1: number;
  a2: number;
  shared: number;
  only_a1: number;
  only_a2: number;
  jaccard: number;
  dice: number;
  jaccard_pct: string;
  dice_pct: string;
  degenerate: boolean;
}

export interface IaaReport {
  rows: IaaRow[];
  pooled: IaaRow;
}

export interface DisagreementRow {
  span: string;
  in_sessions: string[];
}

export interface ArbitrationBoard {
  ready: boolean;
  reason?: string;
  sessions?: string[];
  agreements: string[];
  disagreements: DisagreementRow[];
  arbitrated?: boolean;
}

export interface DraftRow {
  span_text: string;
  chunk_indices: number[];
  property_ids: string[];
  origin: "candidate" | "annotator";
}

export interface ApiError {
  code: string;
  message: string;
  details: unknown;
}
