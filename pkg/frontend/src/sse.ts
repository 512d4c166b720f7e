import type { ChatEvent } from "./types.js";

export type FetchLike = typeof fetch;

/**
 * POST a question to /api/chat and forward each SSE event to the callback.
 * Frames may arrive split across network reads; a buffer holds the tail
 * until its terminating blank line shows up.
 */
export async function streamChat(
  baseUrl: string,
  body: { question: string; session_id?: string },
  onEvent: (event: ChatEvent) => void,
  fetchImpl: FetchLike = fetch,
): Promise<void> {
  const response = await fetchImpl(`${baseUrl}/api/chat`, {
    method: "POST",
    headers: { "Content-Type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!response.ok) {
    let detail = "";
    try {
      detail = ((await response.json()) as { error?: string }).error ?? "";
    } catch {
      /* non-JSON error body */
    }
    throw new Error(detail || `HTTP ${response.status}`);
  }
  if (!response.body) throw new Error("response has no body to stream");

  const reader = response.body.getReader();
  const decoder = new TextDecoder("utf-8");
  let buffer = "";
  for (;;) {
    const { value, done } = await reader.read();
    if (done) break;
    buffer += decoder.decode(value, { stream: true });
    const frames = buffer.split(/\r?\n\r?\n/);
    buffer = frames.pop() ?? "";
    for (const frame of frames) {
      const event = parseFrame(frame);
      if (event) onEvent(event);
    }
  }
  if (buffer.trim()) {
    const event = parseFrame(buffer);
    if (event) onEvent(event);
  }
}

function parseFrame(frame: string): ChatEvent | null {
  let name = "message";
  const dataLines: string[] = [];
  for (const rawLine of frame.split(/\r?\n/)) {
    if (rawLine.startsWith("event:")) {
      name = rawLine.slice("event:".length).trim();
    } else if (rawLine.startsWith("data:")) {
      dataLines.push(rawLine.slice("data:".length).trim());
    }
  }
  if (dataLines.length === 0) return null;
  let data: unknown;
  try {
    data = JSON.parse(dataLines.join("\n"));
  } catch {
    return null;
  }
  if (name === "chunk" || name === "done" || name === "error") {
    return { event: name, data } as ChatEvent;
  }
  return null;
}
