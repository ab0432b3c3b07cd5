// Typed client for the session service. Uses exactly the documented
// endpoints; streaming is consumed as line-delimited JSON events.

export interface ContentFlags {
  density: number;
  accuracy: number;
}

export interface QosSettings {
  speed: number;
  pause_pos: number;
  pause_dur: number;
}

export interface PlanItem {
  question_id: string;
  content: ContentFlags;
  qos: QosSettings;
}

export interface SessionPlan {
  session_id: string;
  rater_id: string;
  seed: string;
  created_at: string;
  items: PlanItem[];
}

export interface RaterProfile {
  rater_id: string;
  language: string;
  mbti: string;
  patience: number;
  sessions_completed: number;
}

export interface Scores {
  overall: number;
  content: number;
  response: number;
}

export interface StoredRecord {
  session_id: string;
  rater_id: string;
  question_id: string;
  category: string;
  content: ContentFlags;
  qos: QosSettings;
  scores: Scores;
  timestamp: string;
}

export type StreamEvent =
  | { kind: "token"; index: number; token: string }
  | { kind: "done"; count: number };

export class ApiError extends Error {
  constructor(
    public readonly code: string,
    public readonly detail: string,
    public readonly status: number,
  ) {
    super(`${code}: ${detail}`);
  }
}

async function throwApiError(response: Response): Promise<never> {
  let code = "http-error";
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (body && typeof body.error === "string") {
      code = body.error;
      detail = body.detail ?? detail;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  throw new ApiError(code, detail, response.status);
}

export class SessionApi {
  constructor(private readonly baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/$/, "") + path;
  }

  async health(): Promise<boolean> {
    try {
      const response = await fetch(this.url("/health"));
      return response.ok;
    } catch {
      return false;
    }
  }

  async registerRater(payload: {
    language: string;
    mbti: string;
    patience: number;
  }): Promise<RaterProfile> {
    const response = await fetch(this.url("/raters"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!response.ok) await throwApiError(response);
    return response.json();
  }

  async createSession(raterId: string): Promise<SessionPlan> {
    const response = await fetch(this.url("/sessions"), {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ rater_id: raterId }),
    });
    if (!response.ok) await throwApiError(response);
    return response.json();
  }

  /** Consume one item's event stream, invoking onEvent per parsed line. */
  async streamItem(
    sessionId: string,
    index: number,
    onEvent: (event: StreamEvent) => void,
  ): Promise<void> {
    const response = await fetch(
      this.url(`/sessions/${sessionId}/items/${index}/stream`),
    );
    if (!response.ok) await throwApiError(response);
    if (!response.body) throw new ApiError("no-body", "stream has no body", 0);
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { done, value } = await reader.read();
      if (value) {
        buffer += decoder.decode(value, { stream: true });
        let nl;
        while ((nl = buffer.indexOf("\n")) >= 0) {
          const line = buffer.slice(0, nl).trim();
          buffer = buffer.slice(nl + 1);
          if (line) onEvent(parseStreamLine(line));
        }
      }
      if (done) break;
    }
    const rest = buffer.trim();
    if (rest) onEvent(parseStreamLine(rest));
  }

  async submitRating(
    sessionId: string,
    index: number,
    scores: Scores,
  ): Promise<StoredRecord> {
    const response = await fetch(
      this.url(`/sessions/${sessionId}/items/${index}/rating`),
      {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(scores),
      },
    );
    if (!response.ok) await throwApiError(response);
    const body = await response.json();
    return body.record;
  }

  async exportRatings(): Promise<StoredRecord[]> {
    const response = await fetch(this.url("/export/ratings"));
    if (!response.ok) await throwApiError(response);
    const text = await response.text();
    return text
      .split("\n")
      .map((line) => line.trim())
      .filter((line) => line && !line.startsWith("#"))
      .map((line) => JSON.parse(line));
  }
}

export function parseStreamLine(line: string): StreamEvent {
  const raw = JSON.parse(line);
  if (raw.done === true) {
    return { kind: "done", count: raw.count };
  }
  return { kind: "token", index: raw.index, token: raw.token };
}
