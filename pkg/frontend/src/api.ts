import type { Annotation, GenerateRequest, MessageReply, SessionView, Trace } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = typeof fetch;

/** Thin typed client for the chat service; the UI holds no model state. */
export class ApiClient {
  constructor(
    public baseUrl: string,
    private fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, {
      method,
      headers: { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json().catch(() => ({}));
    if (!response.ok) {
      const err = (payload as { error?: { code?: string; message?: string } }).error;
      throw new ApiError(
        response.status,
        err?.code ?? "http_error",
        err?.message ?? `HTTP ${response.status}`,
      );
    }
    return payload as T;
  }

  getPolicy(): Promise<unknown> {
    return this.request("GET", "/policy");
  }

  async createSession(policy?: unknown): Promise<string> {
    const created = await this.request<{ session_id: string }>("POST", "/sessions", {
      policy: policy ?? null,
    });
    return created.session_id;
  }

  postMessage(sessionId: string, text: string): Promise<MessageReply> {
    return this.request("POST", `/sessions/${sessionId}/message`, { text });
  }

  generate(sessionId: string, options: GenerateRequest = {}): Promise<Trace> {
    const body: Record<string, unknown> = {};
    if (options.plan_override !== undefined) body.plan_override = options.plan_override;
    if (options.seed !== undefined) body.seed = options.seed;
    if (options.regenerate) body.regenerate = true;
    return this.request("POST", `/sessions/${sessionId}/generate`, body);
  }

  getSession(sessionId: string): Promise<SessionView> {
    return this.request("GET", `/sessions/${sessionId}`);
  }
}

export type { Annotation };
