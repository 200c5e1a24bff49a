import { describe, expect, it } from "vitest";

import {
  decidedCount,
  effectiveVerdicts,
  finalizeGate,
  paginate,
  progressLabel,
} from "../src/state.js";
import type { DecisionRecord } from "../src/types.js";

const server: Record<string, DecisionRecord> = {
  c0: { verdict: "accept", text: null, ts: 1 },
  c1: { verdict: "reject", text: null, ts: 2 },
};

describe("effectiveVerdicts", () => {
  it("is server state plus the local unsent queue", () => {
    const out = effectiveVerdicts(server, [{ candidateId: "c2", verdict: "accept" }]);
    expect(out).toEqual({ c0: "accept", c1: "reject", c2: "accept" });
  });

  it("lets a queued verdict override the server until acked", () => {
    const out = effectiveVerdicts(server, [{ candidateId: "c0", verdict: "reject" }]);
    expect(out.c0).toBe("reject");
  });
});

describe("progress", () => {
  it("counts decided candidates once across server and queue", () => {
    const decided = decidedCount(server, [
      { candidateId: "c0", verdict: "reject" },
      { candidateId: "c2", verdict: "accept" },
    ]);
    expect(decided).toBe(3);
    expect(progressLabel(5, 12)).toBe("5/12");
  });
});

describe("paginate", () => {
  const items = Array.from({ length: 25 }, (_, i) => i);

  it("slices pages and clamps out-of-range requests", () => {
    expect(paginate(items, 0, 10).items).toHaveLength(10);
    expect(paginate(items, 2, 10).items).toHaveLength(5);
    expect(paginate(items, 99, 10).page).toBe(2);
    expect(paginate([], 0, 10).pages).toBe(1);
  });
});

describe("finalizeGate", () => {
  const disagreements = [
    { span: "one", in_sessions: ["s1"] },
    { span: "two", in_sessions: ["s2"] },
    { span: "three", in_sessions: ["s1"] },
  ];

  it("blocks while any disagreement lacks a verdict", () => {
    const gate = finalizeGate(disagreements, { one: "accept", two: "reject" });
    expect(gate.enabled).toBe(false);
    expect(gate.remaining).toEqual(["three"]);
  });

  it("enables once every disagreement is decided", () => {
    const gate = finalizeGate(disagreements, { one: "accept", two: "reject", three: "reject" });
    expect(gate.enabled).toBe(true);
    expect(gate.remaining).toEqual([]);
  });

  it("is enabled immediately with no disagreements", () => {
    expect(finalizeGate([], {}).enabled).toBe(true);
  });
});
