/* Thin typed client over the advisor HTTP API.  The transport is
   injectable so tests can replay recorded traffic without a server. */

import type {
  AdvicePayload,
  HealthInfo,
  MatchAck,
  MatchPayload,
  SessionSnapshot,
} from "./types.js";

export interface HttpReply {
  status: number;
  body: unknown;
}

export type Transport = (
  method: string,
  path: string,
  body?: unknown,
) => Promise<HttpReply>;

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: unknown,
  ) {
    super(
      typeof detail === "string" ? detail : `request failed (HTTP ${status})`,
    );
  }
}

/* 422 bodies carry a list of {loc, msg} entries; key each message on the
   last non-index loc segment so the form can attach it to a field. */
export class ValidationError extends ApiError {
  fields: Record<string, string>;

  constructor(detail: unknown) {
    super(422, detail);
    this.fields = {};
    if (!Array.isArray(detail)) return;
    for (const entry of detail as { loc?: unknown[]; msg?: unknown }[]) {
      const names = (entry.loc ?? []).filter(
        (seg): seg is string => typeof seg === "string" && seg !== "body",
      );
      const key = names.length ? names[names.length - 1] : "payload";
      if (!(key in this.fields)) {
        this.fields[key] = String(entry.msg ?? "invalid value");
      }
    }
  }
}

export function fetchTransport(baseUrl = ""): Transport {
  return async (method, path, body) => {
    const reply = await fetch(baseUrl + path, {
      method,
      headers:
        body === undefined ? undefined : { "content-type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    return { status: reply.status, body: await reply.json() };
  };
}

export class AdvisorClient {
  constructor(private transport: Transport) {}

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const reply = await this.transport(method, path, body);
    const detail = (reply.body as { detail?: unknown } | null)?.detail;
    if (reply.status === 422) throw new ValidationError(detail);
    if (reply.status >= 400) throw new ApiError(reply.status, detail);
    return reply.body as T;
  }

  health(): Promise<HealthInfo> {
    return this.request("GET", "/health");
  }

  async createSession(): Promise<string> {
    const reply = await this.request<{ session_id: string }>(
      "POST",
      "/session",
    );
    return reply.session_id;
  }

  getSession(sessionId: string): Promise<SessionSnapshot> {
    return this.request("GET", `/session/${sessionId}`);
  }

  logMatch(sessionId: string, payload: MatchPayload): Promise<MatchAck> {
    return this.request("POST", `/session/${sessionId}/match`, payload);
  }

  getAdvice(sessionId: string): Promise<AdvicePayload> {
    return this.request("GET", `/session/${sessionId}/advice`);
  }
}
