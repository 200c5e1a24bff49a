import { describe, expect, it } from "vitest";

import { PendingDecision, UnsentQueue } from "../src/queue.js";

function flakySender(failFirst: number) {
  const sent: PendingDecision[] = [];
  let failures = failFirst;
  const send = async (d: PendingDecision) => {
    if (failures > 0) {
      failures -= 1;
      throw new Error("connection refused");
    }
    sent.push(d);
  };
  return { sent, send };
}

describe("UnsentQueue", () => {
  it("drains in order on success", async () => {
    const { sent, send } = flakySender(0);
    const queue = new UnsentQueue(send);
    queue.enqueue({ candidateId: "c0", verdict: "accept" });
    queue.enqueue({ candidateId: "c1", verdict: "reject" });
    const result = await queue.flush();
    expect(result).toEqual({ sent: 2, error: null });
    expect(sent.map((d) => d.candidateId)).toEqual(["c0", "c1"]);
    expect(queue.size).toBe(0);
  });

  it("never drops an unsent verdict when the server is down", async () => {
    const { sent, send } = flakySender(1);
    const queue = new UnsentQueue(send);
    queue.enqueue({ candidateId: "c0", verdict: "accept" });
    queue.enqueue({ candidateId: "c1", verdict: "reject" });
    const first = await queue.flush();
    expect(first.sent).toBe(0);
    expect(first.error).toContain("connection refused");
    expect(queue.size).toBe(2);
    // Retry after the server recovers: everything still goes through.
    const second = await queue.flush();
    expect(second).toEqual({ sent: 2, error: null });
    expect(sent).toHaveLength(2);
  });

  it("replaces a queued verdict for the same candidate", async () => {
    const { sent, send } = flakySender(0);
    const queue = new UnsentQueue(send);
    queue.enqueue({ candidateId: "c0", verdict: "accept" });
    queue.enqueue({ candidateId: "c0", verdict: "reject" });
    expect(queue.size).toBe(1);
    await queue.flush();
    expect(sent).toEqual([{ candidateId: "c0", verdict: "reject", text: undefined }]);
  });

  it("keeps later items queued behind a failing head", async () => {
    const { send } = flakySender(99);
    const queue = new UnsentQueue(send);
    queue.enqueue({ candidateId: "c0", verdict: "accept" });
    queue.enqueue({ candidateId: "c1", verdict: "accept" });
    await queue.flush();
    expect(queue.pending.map((d) => d.candidateId)).toEqual(["c0", "c1"]);
  });
});
