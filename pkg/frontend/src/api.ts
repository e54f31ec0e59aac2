// Thin client over the chat service JSON API. The transport is injected so
// tests can run against a fake server.

export interface IntentionRow {
  intention: number;
  prob: number;
  decoded: string;
}

export interface Diagnostics {
  intentions: IntentionRow[];
  chosen_intention: number;
  db_matches: number;
  belief: Record<string, string>;
  requested: string[];
  unresolved: string[];
}

export interface MessageResult {
  response: string;
  diagnostics: Diagnostics;
}

export interface SessionState {
  session_id: string;
  turns: number;
  belief: Record<string, string>;
  requested: string[];
  offered_entity: string | null;
  transcript: { speaker: string; text: string }[];
}

export type Transport = (
  method: string,
  path: string,
  body?: unknown,
) => Promise<{ status: number; json: unknown }>;

export class ApiError extends Error {
  constructor(
    public status: number,
    message: string,
  ) {
    super(message);
  }
}

export function fetchTransport(baseUrl = ""): Transport {
  return async (method, path, body) => {
    const resp = await fetch(baseUrl + path, {
      method,
      headers: { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    return { status: resp.status, json: await resp.json() };
  };
}

async function expectOk<T>(
  call: Promise<{ status: number; json: unknown }>,
): Promise<T> {
  const { status, json } = await call;
  if (status !== 200) {
    const message =
      typeof json === "object" && json !== null && "error" in json
        ? String((json as { error: unknown }).error)
        : `request failed with status ${status}`;
    throw new ApiError(status, message);
  }
  return json as T;
}

export class ApiClient {
  constructor(private transport: Transport) {}

  async createSession(): Promise<string> {
    const out = await expectOk<{ session_id: string }>(
      this.transport("POST", "/api/session"),
    );
    return out.session_id;
  }

  sendMessage(
    sessionId: string,
    text: string,
    forcedIntention?: number,
  ): Promise<MessageResult> {
    const body: Record<string, unknown> = { text };
    if (forcedIntention !== undefined) body.forced_intention = forcedIntention;
    return expectOk<MessageResult>(
      this.transport("POST", `/api/session/${sessionId}/message`, body),
    );
  }

  getState(sessionId: string): Promise<SessionState> {
    return expectOk<SessionState>(
      this.transport("GET", `/api/session/${sessionId}/state`),
    );
  }

  async deleteSession(sessionId: string): Promise<void> {
    await expectOk(this.transport("DELETE", `/api/session/${sessionId}`));
  }
}
