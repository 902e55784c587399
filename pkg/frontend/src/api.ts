import type { SessionSnapshot } from "./types.js";

export class ApiError extends Error {
  constructor(
    message: string,
    public status: number,
    public detail: unknown = null,
  ) {
    super(message);
  }
}

async function parseResponse(response: Response): Promise<SessionSnapshot> {
  let body: any = null;
  try {
    body = await response.json();
  } catch {
    // non-JSON error body; fall through with null detail
  }
  if (!response.ok) {
    const detail = body?.detail ?? body;
    const message =
      typeof detail === "string" ? detail : detail?.message ?? response.statusText;
    throw new ApiError(message, response.status, detail);
  }
  return body as SessionSnapshot;
}

export interface SessionApi {
  startSession(question: string, mode: string, k?: number): Promise<SessionSnapshot>;
  clarify(sessionId: string, reply: string): Promise<SessionSnapshot>;
  getSession(sessionId: string): Promise<SessionSnapshot>;
}

export class ApiClient implements SessionApi {
  constructor(private baseUrl: string) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  async startSession(
    question: string,
    mode: string,
    k?: number,
  ): Promise<SessionSnapshot> {
    const response = await fetch(`${this.baseUrl}/sessions`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(k ? { question, mode, k } : { question, mode }),
    });
    return parseResponse(response);
  }

  async clarify(sessionId: string, reply: string): Promise<SessionSnapshot> {
    const response = await fetch(
      `${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}/clarify`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ reply }),
      },
    );
    return parseResponse(response);
  }

  async getSession(sessionId: string): Promise<SessionSnapshot> {
    const response = await fetch(
      `${this.baseUrl}/sessions/${encodeURIComponent(sessionId)}`,
    );
    return parseResponse(response);
  }
}
