import { describe, expect, it } from "vitest";

import { ApiClient, ApiRequestError } from "../src/api.js";

interface Recorded {
  url: string;
  method: string;
  body: unknown;
  headers: Record<string, string>;
}

function recordingFetch(responses: Record<string, unknown>, status = 200) {
  const calls: Recorded[] = [];
  const fetchFn = async (url: string, init?: RequestInit): Promise<Response> => {
    calls.push({
      url,
      method: init?.method ?? "GET",
      body: init?.body ? JSON.parse(init.body as string) : undefined,
      headers: (init?.headers ?? {}) as Record<string, string>,
    });
    const payload = responses[url] ?? { ok: true };
    return new Response(JSON.stringify(payload), {
      status,
      headers: { "Content-Type": "application/json" },
    });
  };
  return { calls, fetchFn };
}

describe("ApiClient", () => {
  it("posts a verdict with the exact body the server logs", async () => {
    const { calls, fetchFn } = recordingFetch({});
    const api = new ApiClient(fetchFn);
    await api.postDecision("sess-1", "c0", "accept");
    expect(calls[0]).toMatchObject({
      url: "/api/sessions/sess-1/decisions",
      method: "POST",
      body: { candidate_id: "c0", verdict: "accept" },
    });
  });

  it("posts edited text alongside the verdict", async () => {
    const { calls, fetchFn } = recordingFetch({});
    await new ApiClient(fetchFn).postDecision("sess-1", "c3", "edited", "Corrected sentence.");
    expect(calls[0].body).toEqual({
      candidate_id: "c3",
      verdict: "edited",
      text: "Corrected sentence.",
    });
  });

  it("posts a manual span as a text-only decision body", async () => {
    const { calls, fetchFn } = recordingFetch({});
    await new ApiClient(fetchFn).addManualSpan("sess-2", "Missing goal sentence.");
    expect(calls[0].body).toEqual({ text: "Missing goal sentence." });
  });

  it("encodes protocol names in paths", async () => {
    const { calls, fetchFn } = recordingFetch({});
    await new ApiClient(fetchFn).candidates("Kao-Chow v1");
    expect(calls[0].url).toBe("/api/protocols/Kao-Chow%20v1/candidates");
  });

  it("sends the review token header when configured", async () => {
    const { calls, fetchFn } = recordingFetch({});
    await new ApiClient(fetchFn, "", "sekrit").listProtocols();
    expect(calls[0].headers["X-Review-Token"]).toBe("sekrit");
  });

  it("surfaces the server's error envelope", async () => {
    const fetchFn = async (): Promise<Response> =>
      new Response(
        JSON.stringify({ code: "incomplete_arbitration", message: "2 pending", details: { pending: ["a", "b"] } }),
        { status: 409, headers: { "Content-Type": "application/json" } },
      );
    const api = new ApiClient(fetchFn);
    const err = await api.arbitrate("NSSK", {}).catch((e) => e);
    expect(err).toBeInstanceOf(ApiRequestError);
    expect(err.status).toBe(409);
    expect(err.code).toBe("incomplete_arbitration");
    expect(err.details).toEqual({ pending: ["a", "b"] });
  });

  it("builds the export download URL", () => {
    expect(new ApiClient().exportUrl("NSSK")).toBe("/api/export/NSSK/goals.jsonl");
  });
});
