// Thin fetch wrapper over the review API. The fetch function is injectable
// so tests can record requests and script responses.

import type {
  ArbitrationBoard,
  CandidateCard,
  IaaReport,
  ProtocolInfo,
  SessionState,
  Verdict,
} from "./types.js";

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiRequestError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
    readonly details: unknown = null,
  ) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private readonly fetchFn: FetchLike = (input, init) => fetch(input, init),
    private readonly base: string = "",
    private readonly token: string | null = null,
  ) {}

  private headers(): Record<string, string> {
    const headers: Record<string, string> = { "Content-Type": "application/json" };
    if (this.token) headers["X-Review-Token"] = this.token;
    return headers;
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: this.headers() };
    if (body !== undefined) init.body = JSON.stringify(body);
    const resp = await this.fetchFn(this.base + path, init);
    if (!resp.ok) {
      let code = "error";
      let message = `${resp.status}`;
      let details: unknown = null;
      try {
        const payload = await resp.json();
        code = payload.code ?? code;
        message = payload.message ?? message;
        details = payload.details ?? null;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiRequestError(resp.status, code, message, details);
    }
    return (await resp.json()) as T;
  }

  listProtocols(): Promise<{ protocols: ProtocolInfo[] }> {
    return this.request("GET", "/api/protocols");
  }

  candidates(protocol: string): Promise<{ protocol: string; candidates: CandidateCard[] }> {
    return this.request("GET", `/api/protocols/${encodeURIComponent(protocol)}/candidates`);
  }

  createSession(annotatorId: string, protocol: string): Promise<{ session_id: string }> {
    return this.request("POST", "/api/sessions", { annotator_id: annotatorId, protocol });
  }

  sessionState(sessionId: string): Promise<SessionState> {
    return this.request("GET", `/api/sessions/${sessionId}/decisions`);
  }

  postDecision(sessionId: string, candidateId: string, verdict: Verdict, text?: string): Promise<{ ok: boolean }> {
    const body: Record<string, unknown> = { candidate_id: candidateId, verdict };
    if (text !== undefined) body.text = text;
    return this.request("POST", `/api/sessions/${sessionId}/decisions`, body);
  }

  addManualSpan(sessionId: string, text: string): Promise<{ ok: boolean; span_id: string }> {
    return this.request("POST", `/api/sessions/${sessionId}/decisions`, { text });
  }

  submit(sessionId: string): Promise<{ ok: boolean; state: string }> {
    return this.request("POST", `/api/sessions/${sessionId}/submit`);
  }

  iaa(protocol?: string): Promise<IaaReport> {
    const query = protocol ? `?protocol=${encodeURIComponent(protocol)}` : "";
    return this.request("GET", `/api/iaa${query}`);
  }

  arbitrationBoard(protocol: string): Promise<ArbitrationBoard> {
    return this.request("GET", `/api/arbitration/${encodeURIComponent(protocol)}`);
  }

  arbitrate(protocol: string, verdicts: Record<string, "accept" | "reject">): Promise<unknown> {
    return this.request("POST", `/api/arbitration/${encodeURIComponent(protocol)}`, { verdicts });
  }

  exportUrl(protocol: string): string {
    return `${this.base}/api/export/${encodeURIComponent(protocol)}/goals.jsonl`;
  }
}
