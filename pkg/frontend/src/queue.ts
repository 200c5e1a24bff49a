// Local queue of verdicts not yet acknowledged by the server. A verdict
// never lives only in the DOM: it sits here until the POST is acked, and
// a failed flush keeps it (and everything behind it) for retry.

import type { Verdict } from "./types.js";

export interface PendingDecision {
  candidateId: string;
  verdict: Verdict;
  text?: string;
}

export type SendFn = (d: PendingDecision) => Promise<void>;

export interface FlushResult {
  sent: number;
  error: string | null;
}

export class UnsentQueue {
  private items: PendingDecision[] = [];
  private flushing = false;

  constructor(private readonly send: SendFn) {}

  get size(): number {
    return this.items.length;
  }

  get pending(): readonly PendingDecision[] {
    return this.items;
  }

  enqueue(decision: PendingDecision): void {
    // A newer verdict for the same candidate supersedes the queued one.
    this.items = this.items.filter((d) => d.candidateId !== decision.candidateId);
    this.items.push(decision);
  }

  async flush(): Promise<FlushResult> {
    if (this.flushing) return { sent: 0, error: null };
    this.flushing = true;
    let sent = 0;
    try {
      while (this.items.length > 0) {
        const head = this.items[0];
        try {
          await this.send(head);
        } catch (err) {
          return { sent, error: err instanceof Error ? err.message : String(err) };
        }
        // Only drop the item once the server acked it.
        this.items.shift();
        sent += 1;
      }
      return { sent, error: null };
    } finally {
      this.flushing = false;
    }
  }
}
