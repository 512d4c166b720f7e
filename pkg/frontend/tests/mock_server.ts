/**
 * Mock of the serving API for tests: same endpoints, same SSE wire format.
 * Responses are scripted by question substring; chunks are deliberately
 * small so trial IDs split across frames, and frames are written in
 * irregular byte slices to exercise client-side buffering.
 */

import { createServer, type Server } from "node:http";
import type { AddressInfo } from "node:net";

export interface ScriptedAnswer {
  match: string;
  text: string;
  evidence?: Array<{
    relation_iri: string;
    predicate: string;
    subject: string;
    object: string;
    publication_id: string;
  }>;
}

interface Turn {
  role: "user" | "assistant";
  text: string;
  timestamp: number;
}

export interface MockApi {
  baseUrl: string;
  server: Server;
  sessions: Map<string, Turn[]>;
  close(): Promise<void>;
}

const DEFAULT_EVIDENCE = [
  {
    relation_iri: "http://amdkg.example.org/relation/abc123",
    predicate: "aggravate",
    subject: "smoking",
    object: "age-related macular degeneration",
    publication_id: "NCT00466076",
  },
];

function sse(event: string, data: unknown): string {
  return `event: ${event}\ndata: ${JSON.stringify(data)}\n\n`;
}

export async function startMockApi(
  answers: ScriptedAnswer[],
  { chunkSize = 7, defaultText = "No further details are available." } = {},
): Promise<MockApi> {
  const sessions = new Map<string, Turn[]>();
  let counter = 0;

  const server = createServer((req, res) => {
    if (req.method === "GET" && req.url?.startsWith("/api/session/")) {
      const id = decodeURIComponent(req.url.slice("/api/session/".length));
      const history = sessions.get(id);
      if (!history) {
        res.writeHead(404, { "Content-Type": "application/json" });
        res.end(JSON.stringify({ error: `unknown session: ${id}` }));
        return;
      }
      res.writeHead(200, { "Content-Type": "application/json" });
      res.end(JSON.stringify({ session_id: id, created_at: 0, history }));
      return;
    }

    if (req.method === "POST" && req.url === "/api/chat") {
      let body = "";
      req.on("data", (piece) => (body += piece));
      req.on("end", () => {
        let question: string;
        let sessionId: string;
        try {
          const parsed = JSON.parse(body) as { question?: string; session_id?: string };
          if (!parsed.question?.trim()) throw new Error("no question");
          question = parsed.question;
          sessionId = parsed.session_id ?? `mock-${++counter}`;
        } catch {
          res.writeHead(400, { "Content-Type": "application/json" });
          res.end(JSON.stringify({ error: "bad body" }));
          return;
        }

        res.writeHead(200, {
          "Content-Type": "text/event-stream",
          "Cache-Control": "no-cache",
        });

        if (question.includes("fail")) {
          res.write(sse("error", { message: "scripted failure" }));
          res.end();
          return;
        }

        const scripted = answers.find((a) => question.includes(a.match));
        const text = scripted?.text ?? defaultText;
        const evidence = scripted?.evidence ?? DEFAULT_EVIDENCE;

        const history = sessions.get(sessionId) ?? [];
        history.push({ role: "user", text: question, timestamp: Date.now() / 1000 });
        history.push({ role: "assistant", text, timestamp: Date.now() / 1000 });
        sessions.set(sessionId, history);

        let wire = "";
        for (let i = 0; i < text.length; i += chunkSize) {
          wire += sse("chunk", { text: text.slice(i, i + chunkSize) });
        }
        wire += sse("done", {
          session_id: sessionId,
          full_text: text,
          evidence,
          elapsed_s: 0.01,
        });
        // write in irregular slices so frames split mid-line on the wire
        for (let i = 0; i < wire.length; i += 11) {
          res.write(wire.slice(i, i + 11));
        }
        res.end();
      });
      return;
    }

    res.writeHead(404, { "Content-Type": "application/json" });
    res.end(JSON.stringify({ error: "not found" }));
  });

  await new Promise<void>((resolve) => server.listen(0, "127.0.0.1", resolve));
  const { port } = server.address() as AddressInfo;
  return {
    baseUrl: `http://127.0.0.1:${port}`,
    server,
    sessions,
    close: () => new Promise((resolve) => server.close(() => resolve())),
  };
}
