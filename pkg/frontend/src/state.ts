// Pure view-state helpers: what the screens show is a function of the
// last-fetched server state plus the local unsent queue, nothing else.

import type { PendingDecision } from "./queue.js";
import type { DecisionRecord, DisagreementRow, Verdict } from "./types.js";

export function effectiveVerdicts(
  server: Record<string, DecisionRecord>,
  pending: readonly PendingDecision[],
): Record<string, Verdict> {
  const out: Record<string, Verdict> = {};
  for (const [cid, record] of Object.entries(server)) out[cid] = record.verdict;
  for (const d of pending) out[d.candidateId] = d.verdict; // local wins until acked
  return out;
}

export function decidedCount(
  server: Record<string, DecisionRecord>,
  pending: readonly PendingDecision[],
): number {
  const ids = new Set(Object.keys(server));
  for (const d of pending) ids.add(d.candidateId);
  return ids.size;
}

export function progressLabel(decided: number, total: number): string {
  return `${decided}/${total}`;
}

export interface Page<T> {
  items: T[];
  page: number;
  pages: number;
}

export function paginate<T>(items: T[], page: number, perPage: number): Page<T> {
  const pages = Math.max(1, Math.ceil(items.length / perPage));
  const clamped = Math.min(Math.max(page, 0), pages - 1);
  return { items: items.slice(clamped * perPage, (clamped + 1) * perPage), page: clamped, pages };
}

export interface FinalizeGate {
  enabled: boolean;
  remaining: string[];
}

// Finalize is allowed only when every disagreement has an arbiter verdict.
export function finalizeGate(
  disagreements: DisagreementRow[],
  verdicts: Record<string, "accept" | "reject">,
): FinalizeGate {
  const remaining = disagreements.map((d) => d.span).filter((span) => !(span in verdicts));
  return { enabled: remaining.length === 0, remaining };
}
