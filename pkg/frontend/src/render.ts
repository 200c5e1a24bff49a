// HTML-string renderers. Keeping these as pure string functions makes the
// screens testable without a browser; main.ts only mounts the strings and
// wires events. Highlights use the server-provided character offsets --
// the client never re-searches the chunk text.

import type { FinalizeGate, Page } from "./state.js";
import type {
  ArbitrationBoard,
  CandidateCard,
  IaaReport,
  IaaRow,
  ProtocolInfo,
  Verdict,
} from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderHighlightedChunk(card: CandidateCard): string {
  const h = card.highlight;
  if (!h) {
    return `<pre class="chunk">${escapeHtml(card.chunk_text)}</pre>`;
  }
  const before = escapeHtml(card.chunk_text.slice(0, h.start));
  const hit = escapeHtml(card.chunk_text.slice(h.start, h.end));
  const after = escapeHtml(card.chunk_text.slice(h.end));
  return `<pre class="chunk">${before}<mark>${hit}</mark>${after}</pre>`;
}

export function renderCandidateCard(card: CandidateCard, verdict?: Verdict): string {
  const badge = card.non_verbatim
    ? '<span class="flag" title="sentence not found verbatim in the chunk">non-verbatim</span>'
    : "";
  const verdictClass = verdict ? ` verdict-${verdict}` : "";
  const verdictLabel = verdict ? `<span class="verdict">${verdict}</span>` : '<span class="verdict undecided">undecided</span>';
  return `
<article class="card${verdictClass}" data-candidate="${escapeHtml(card.candidate_id)}" tabindex="0">
  <header>
    <code>${escapeHtml(card.candidate_id)}</code>
    <span class="chunk-index">chunk ${card.chunk_index}</span>
    ${badge}
    ${verdictLabel}
  </header>
  <p class="sentence">${escapeHtml(card.text)}</p>
  ${renderHighlightedChunk(card)}
  <footer>
    <button data-action="accept">accept (a)</button>
    <button data-action="reject">reject (r)</button>
    <button data-action="edit">edit (e)</button>
  </footer>
</article>`;
}

export interface QueueView {
  protocol: string;
  sessionId: string;
  page: Page<CandidateCard>;
  verdicts: Record<string, Verdict>;
  decided: number;
  total: number;
  unsent: number;
  flushError: string | null;
  submitted: boolean;
}

export function renderQueue(view: QueueView): string {
  const banner = view.flushError
    ? `<div class="banner error">cannot reach the server (${escapeHtml(view.flushError)}); ` +
      `${view.unsent} unsent verdict(s) kept locally <button data-action="retry">retry</button></div>`
    : view.unsent > 0
      ? `<div class="banner">${view.unsent} verdict(s) awaiting ack</div>`
      : "";
  const cards = view.page.items
    .map((card) => renderCandidateCard(card, view.verdicts[card.candidate_id]))
    .join("\n");
  const pager =
    view.page.pages > 1
      ? `<nav class="pager"><button data-action="prev-page">prev</button>` +
        `<span>page ${view.page.page + 1}/${view.page.pages}</span>` +
        `<button data-action="next-page">next</button></nav>`
      : "";
  const submit = view.submitted
    ? '<p class="submitted">session submitted (read-only)</p>'
    : '<button class="submit" data-action="submit">submit session</button>';
  return `
<section class="queue" data-protocol="${escapeHtml(view.protocol)}">
  <h2>${escapeHtml(view.protocol)} — review queue</h2>
  <p class="progress">progress ${view.decided}/${view.total}</p>
  ${banner}
  ${cards}
  ${pager}
  <form class="add-goal" data-action="add-goal">
    <input name="span" placeholder="add a missing goal sentence" />
    <button type="submit">add</button>
  </form>
  ${submit}
</section>`;
}

function iaaRowHtml(row: IaaRow): string {
  const flag = row.degenerate ? ' <span class="flag">degenerate</span>' : "";
  return (
    `<tr><td>${escapeHtml(row.protocol)}</td><td>${row.a1}</td><td>${row.a2}</td>` +
    `<td>${row.shared}</td><td>${row.only_a1}</td><td>${row.only_a2}</td>` +
    `<td>${row.jaccard_pct}%</td><td>${row.dice_pct}%${flag}</td></tr>`
  );
}

export function renderIaaDashboard(report: IaaReport | null, emptyReason?: string): string {
  if (!report) {
    return `<section class="iaa"><h2>Agreement</h2>
<p class="empty">Agreement needs two submitted sessions per protocol${
      emptyReason ? `: ${escapeHtml(emptyReason)}` : "."
    }</p></section>`;
  }
  const rows = report.rows.map(iaaRowHtml).join("\n");
  return `
<section class="iaa">
  <h2>Agreement</h2>
  <table>
    <thead><tr><th>Protocol</th><th>A1</th><th>A2</th><th>Shr.</th>
    <th>&Delta;A1</th><th>&Delta;A2</th><th>Jacc.</th><th>F1</th></tr></thead>
    <tbody>${rows}</tbody>
    <tfoot>${iaaRowHtml({ ...report.pooled, protocol: "Total" })}</tfoot>
  </table>
</section>`;
}

export interface ArbitrationView {
  protocol: string;
  board: ArbitrationBoard;
  verdicts: Record<string, "accept" | "reject">;
  gate: FinalizeGate;
  exportUrl: string;
}

export function renderArbitrationBoard(view: ArbitrationView): string {
  const { board } = view;
  if (!board.ready) {
    return `<section class="arbitration"><h2>${escapeHtml(view.protocol)} — arbitration</h2>
<p class="empty">${escapeHtml(board.reason ?? "waiting for two submitted sessions")}</p></section>`;
  }
  const rows = board.disagreements
    .map((d) => {
      const verdict = view.verdicts[d.span];
      const status = verdict
        ? `<span class="verdict verdict-${verdict}">${verdict}</span>`
        : '<span class="verdict undecided">pending</span>';
      return `<tr data-span="${escapeHtml(d.span)}">
  <td>${escapeHtml(d.span)}</td>
  <td>${escapeHtml(d.in_sessions.join(", "))}</td>
  <td>${status}
    <button data-action="arb-accept">accept</button>
    <button data-action="arb-reject">reject</button></td>
</tr>`;
    })
    .join("\n");
  const blocked = view.gate.enabled
    ? ""
    : `<p class="blocked">finalize blocked; undecided: ${view.gate.remaining
        .map((s) => escapeHtml(s))
        .join(" | ")}</p>`;
  const download = board.arbitrated
    ? `<a class="download" href="${view.exportUrl}" download>download goals.jsonl</a>`
    : "";
  return `
<section class="arbitration" data-protocol="${escapeHtml(view.protocol)}">
  <h2>${escapeHtml(view.protocol)} — arbitration</h2>
  <p>${board.agreements.length} agreement(s) pass through; ${board.disagreements.length} disagreement(s) to resolve.</p>
  <table>
    <thead><tr><th>Span</th><th>Accepted by</th><th>Arbiter verdict</th></tr></thead>
    <tbody>${rows}</tbody>
  </table>
  ${blocked}
  <button class="finalize" data-action="finalize" ${view.gate.enabled ? "" : "disabled"}>finalize</button>
  ${download}
</section>`;
}

export function renderProtocolList(protocols: ProtocolInfo[]): string {
  const rows = protocols
    .map(
      (p) => `<tr>
  <td><a href="#/queue/${encodeURIComponent(p.name)}">${escapeHtml(p.name)}</a></td>
  <td>${p.chunks}</td><td>${p.candidates}</td>
  <td>${p.sessions.map((s) => `${escapeHtml(s.annotator_id)}:${s.state}`).join(", ") || "-"}</td>
  <td><a href="#/arbitration/${encodeURIComponent(p.name)}">arbitrate</a></td>
</tr>`,
    )
    .join("\n");
  return `
<section class="protocols">
  <h2>Protocols</h2>
  <table>
    <thead><tr><th>Protocol</th><th>Chunks</th><th>Candidates</th><th>Sessions</th><th></th></tr></thead>
    <tbody>${rows}</tbody>
  </table>
  <p><a href="#/iaa">agreement dashboard</a></p>
</section>`;
}
