import { streamChat, type FetchLike } from "./sse.js";
import type { DonePayload, SessionPayload, UiMessage } from "./types.js";

/**
 * Chat state machine, independent of the DOM so it is directly testable.
 *
 * Mirrors the server's contract: at most one in-flight question per session,
 * pending assistant text grows by chunks, and the final bubble text is the
 * done event's full text verbatim.
 */
export class ChatStore {
  messages: UiMessage[] = [];
  sessionId: string | null;
  onChange: () => void = () => {};

  private inFlight = false;

  constructor(
    private readonly baseUrl: string,
    sessionId: string | null = null,
    private readonly fetchImpl: FetchLike = fetch,
  ) {
    this.sessionId = sessionId;
  }

  get pending(): boolean {
    return this.inFlight;
  }

  newChat(): void {
    this.messages = [];
    this.sessionId = null;
    this.onChange();
  }

  /** Restore history for the current session from GET /api/session/{id}. */
  async restore(): Promise<void> {
    if (!this.sessionId) return;
    const response = await this.fetchImpl(
      `${this.baseUrl}/api/session/${encodeURIComponent(this.sessionId)}`,
    );
    if (!response.ok) {
      this.sessionId = null; // stale id (server restarted); start fresh
      return;
    }
    const payload = (await response.json()) as SessionPayload;
    this.messages = payload.history.map((turn) => ({
      role: turn.role,
      text: turn.text,
      pending: false,
      failed: false,
      evidence: [],
    }));
    this.onChange();
  }

  async sendQuestion(question: string): Promise<DonePayload | null> {
    if (this.inFlight || !question.trim()) return null;
    this.inFlight = true;
    this.messages.push({
      role: "user", text: question, pending: false, failed: false, evidence: [],
    });
    const bubble: UiMessage = {
      role: "assistant", text: "", pending: true, failed: false, evidence: [],
    };
    this.messages.push(bubble);
    this.onChange();

    let done: DonePayload | null = null;
    try {
      await streamChat(
        this.baseUrl,
        this.sessionId
          ? { question, session_id: this.sessionId }
          : { question },
        (event) => {
          if (event.event === "chunk") {
            bubble.text += event.data.text; // grows monotonically
          } else if (event.event === "done") {
            done = event.data;
            bubble.text = event.data.full_text;
            bubble.pending = false;
            bubble.evidence = event.data.evidence.map((row) => row.publication_id);
            this.sessionId = event.data.session_id;
          } else {
            bubble.pending = false;
            bubble.failed = true;
          }
          this.onChange();
        },
        this.fetchImpl,
      );
      if (bubble.pending) {
        // stream ended without a terminal event
        bubble.pending = false;
        bubble.failed = true;
      }
    } catch {
      bubble.pending = false;
      bubble.failed = true;
    } finally {
      this.inFlight = false;
      this.onChange();
    }
    return done;
  }

  /** Re-send the question behind the last failed assistant bubble. */
  async retry(): Promise<DonePayload | null> {
    const last = this.messages[this.messages.length - 1];
    if (!last || !last.failed) return null;
    const question = this.messages[this.messages.length - 2];
    if (!question || question.role !== "user") return null;
    this.messages.splice(this.messages.length - 2, 2);
    this.onChange();
    return this.sendQuestion(question.text);
  }
}
