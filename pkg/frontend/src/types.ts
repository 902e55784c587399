// Mirrors of the session API's JSON snapshots.

export interface GroundingView {
  source: [string, number];
  text: string;
  relevance_score: number;
}

export interface CandidateSetView {
  retrieval_mode: string;
  query_echo: string;
  groundings: GroundingView[];
}

export interface SlotView {
  column: string;
  surface_value: string;
  resolved_value: string;
  resolution: string;
  op: string;
}

export interface CoreferenceLinkView {
  surface_value: string;
  kb_value: string;
  verdict: boolean;
  exchange_index: number;
}

export interface AlignmentMetadataView {
  mode: string;
  raw_sql: string | null;
  parse_path: string | null;
  slots: SlotView[];
  links: CoreferenceLinkView[];
  warnings: string[];
  fallback_lexical: boolean;
}

export interface ClarifyingTurnView {
  slot: string;
  options: string[];
  question_text: string;
  user_reply: string | null;
  matched_value: string | null;
}

export interface AnswerResultView {
  answer_text: string;
  used_groundings: [string, number][];
  abstained: boolean;
  alignment_echo: unknown;
}

export interface SessionSnapshot {
  session_id: string;
  question: string;
  mode: string;
  k: number;
  table_name: string;
  state: string;
  candidates: CandidateSetView;
  metadata: AlignmentMetadataView;
  turns: ClarifyingTurnView[];
  result: AnswerResultView | null;
  failure: string | null;
  rounds_used: number;
}
