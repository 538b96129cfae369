import { createServer } from "node:http";
import type { AddressInfo } from "node:net";

export interface RecordedRequest {
  method: string;
  path: string;
  body: Record<string, unknown>;
}

export interface StubServer {
  url: string;
  requests: RecordedRequest[];
  close(): Promise<void>;
}

const PROPOSED_PLAN = {
  emotions: ["None"],
  dialogue_acts: ["Question"],
  topical_words: [["rock"]],
};

const UNDERSTOOD = {
  emotions: ["Happiness"],
  dialogue_acts: ["Inform"],
  topical_words: [["jazz"]],
};

/** Minimal in-process double of the chat service for UI tests. */
export function startStubServer(): Promise<StubServer> {
  const requests: RecordedRequest[] = [];
  const server = createServer((req, res) => {
    if (req.method === "OPTIONS") {
      // CORS preflight, as the real service's middleware answers it.
      res.writeHead(204, {
        "Access-Control-Allow-Origin": "*",
        "Access-Control-Allow-Methods": "GET, POST, OPTIONS",
        "Access-Control-Allow-Headers": "Content-Type",
      });
      return res.end();
    }
    const chunks: Buffer[] = [];
    req.on("data", (chunk) => chunks.push(chunk));
    req.on("end", () => {
      const raw = Buffer.concat(chunks).toString("utf-8");
      const body = raw ? JSON.parse(raw) : {};
      const path = req.url ?? "/";
      requests.push({ method: req.method ?? "GET", path, body });

      const reply = (status: number, payload: unknown) => {
        res.writeHead(status, {
          "Content-Type": "application/json",
          "Access-Control-Allow-Origin": "*",
        });
        res.end(JSON.stringify(payload));
      };

      if (path.includes("/sessions/error/")) {
        return reply(500, { error: { code: "boom", message: "engineered failure" } });
      }
      if (req.method === "POST" && path === "/sessions") {
        return reply(200, { session_id: "stub-1", policy: {} });
      }
      if (req.method === "POST" && path.endsWith("/message")) {
        const text = typeof body.text === "string" ? body.text : "";
        if (!text.trim()) {
          return reply(400, {
            error: { code: "invalid_request", message: "message text is empty" },
          });
        }
        return reply(200, {
          understood: UNDERSTOOD,
          understood_valid: true,
          proposed_plan: PROPOSED_PLAN,
          proposed_plan_valid: true,
          spans: { understanding: ["<emotion>"], planning: ["<topical>"] },
        });
      }
      if (req.method === "POST" && path.endsWith("/generate")) {
        const override = body.plan_override ?? null;
        const seed = typeof body.seed === "number" ? body.seed : 0;
        return reply(200, {
          understood: UNDERSTOOD,
          planned: override ?? PROPOSED_PLAN,
          plan_overridden: override !== null,
          response: `stub response for seed ${seed}`,
          spans: { response: [1, 2, 3] },
          span_surfaces: { response: ["stub", "tokens"] },
          seed,
          understood_valid: true,
          planned_valid: true,
        });
      }
      if (req.method === "GET" && path === "/policy") {
        return reply(200, { response: { top_k: 50 } });
      }
      if (req.method === "GET" && path.startsWith("/sessions/")) {
        return reply(200, {
          session_id: "stub-1",
          context: "",
          history: [],
          traces: [],
          pending: false,
          policy: {},
        });
      }
      return reply(404, { error: { code: "not_found", message: path } });
    });
  });
  return new Promise((resolve) => {
    server.listen(0, "127.0.0.1", () => {
      const { port } = server.address() as AddressInfo;
      resolve({
        url: `http://127.0.0.1:${port}`,
        requests,
        close: () =>
          new Promise((done) => {
            server.close(() => done());
          }),
      });
    });
  });
}
