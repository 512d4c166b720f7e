export type Role = "user" | "assistant";

/** One evidence row as the server reports it in the done event. */
export interface EvidenceRow {
  relation_iri: string;
  predicate: string;
  subject: string;
  object: string;
  publication_id: string;
}

export interface DonePayload {
  session_id: string;
  full_text: string;
  evidence: EvidenceRow[];
  elapsed_s: number;
}

export type ChatEvent =
  | { event: "chunk"; data: { text: string } }
  | { event: "done"; data: DonePayload }
  | { event: "error"; data: { message: string } };

/** One chat bubble. While streaming, `pending` is true and `text` only grows. */
export interface UiMessage {
  role: Role;
  text: string;
  pending: boolean;
  failed: boolean;
  evidence: string[]; // publication ids, filled on done
}

export interface SessionTurn {
  role: Role;
  text: string;
  timestamp: number;
}

export interface SessionPayload {
  session_id: string;
  created_at: number;
  history: SessionTurn[];
}
