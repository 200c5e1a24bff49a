// Browser wiring: hash router, data fetching, event delegation, keyboard
// shortcuts. All decisions flow through the unsent queue and the screen
// re-fetches server state after every ack, so what is shown is always
// server state plus the local queue.

import { ApiClient } from "./api.js";
import { PendingDecision, UnsentQueue } from "./queue.js";
import {
  decidedCount,
  effectiveVerdicts,
  finalizeGate,
  paginate,
} from "./state.js";
import {
  renderArbitrationBoard,
  renderIaaDashboard,
  renderProtocolList,
  renderQueue,
} from "./render.js";
import type { CandidateCard, SessionState, Verdict } from "./types.js";

const PER_PAGE = 10;

const api = new ApiClient();
const app = document.getElementById("app") as HTMLElement;

interface QueueScreenState {
  protocol: string;
  sessionId: string;
  cards: CandidateCard[];
  session: SessionState;
  page: number;
  queue: UnsentQueue;
  flushError: string | null;
}

let queueState: QueueScreenState | null = null;
const arbiterVerdicts: Record<string, Record<string, "accept" | "reject">> = {};

function route(): void {
  const hash = location.hash || "#/";
  const [, view, arg] = hash.split("/");
  if (view === "queue" && arg) {
    void showQueue(decodeURIComponent(arg));
  } else if (view === "iaa") {
    void showIaa();
  } else if (view === "arbitration" && arg) {
    void showArbitration(decodeURIComponent(arg));
  } else {
    void showProtocols();
  }
}

async function showProtocols(): Promise<void> {
  const { protocols } = await api.listProtocols();
  app.innerHTML = renderProtocolList(protocols);
}

async function ensureSession(protocol: string): Promise<string> {
  const key = `aifg-session:${protocol}`;
  const existing = sessionStorage.getItem(key);
  if (existing) return existing;
  const annotator = prompt("annotator id?", "annotator") ?? "annotator";
  const { session_id } = await api.createSession(annotator, protocol);
  sessionStorage.setItem(key, session_id);
  return session_id;
}

async function showQueue(protocol: string, page = 0): Promise<void> {
  const sessionId = await ensureSession(protocol);
  const [cards, session] = await Promise.all([
    api.candidates(protocol).then((r) => r.candidates),
    api.sessionState(sessionId),
  ]);
  const queue =
    queueState && queueState.sessionId === sessionId
      ? queueState.queue
      : new UnsentQueue((d: PendingDecision) =>
          api.postDecision(sessionId, d.candidateId, d.verdict, d.text).then(() => undefined),
        );
  queueState = { protocol, sessionId, cards, session, page, queue, flushError: null };
  paintQueue();
}

function paintQueue(): void {
  if (!queueState) return;
  const { cards, session, queue } = queueState;
  app.innerHTML = renderQueue({
    protocol: queueState.protocol,
    sessionId: queueState.sessionId,
    page: paginate(cards, queueState.page, PER_PAGE),
    verdicts: effectiveVerdicts(session.decisions, queue.pending),
    decided: decidedCount(session.decisions, queue.pending),
    total: session.progress.total,
    unsent: queue.size,
    flushError: queueState.flushError,
    submitted: session.state === "submitted",
  });
}

async function decide(candidateId: string, verdict: Verdict, text?: string): Promise<void> {
  if (!queueState || queueState.session.state === "submitted") return;
  queueState.queue.enqueue({ candidateId, verdict, text });
  paintQueue();
  await flushQueue();
}

async function flushQueue(): Promise<void> {
  if (!queueState) return;
  const result = await queueState.queue.flush();
  queueState.flushError = result.error;
  if (result.sent > 0) {
    // Re-fetch so the screen mirrors acked server state.
    queueState.session = await api.sessionState(queueState.sessionId);
  }
  paintQueue();
}

async function showIaa(): Promise<void> {
  try {
    const report = await api.iaa();
    app.innerHTML = renderIaaDashboard(report);
  } catch (err) {
    app.innerHTML = renderIaaDashboard(null, err instanceof Error ? err.message : String(err));
  }
}

async function showArbitration(protocol: string): Promise<void> {
  const board = await api.arbitrationBoard(protocol);
  const verdicts = (arbiterVerdicts[protocol] ??= {});
  app.innerHTML = renderArbitrationBoard({
    protocol,
    board,
    verdicts,
    gate: finalizeGate(board.disagreements ?? [], verdicts),
    exportUrl: api.exportUrl(protocol),
  });
}

app.addEventListener("click", (event) => {
  const target = event.target as HTMLElement;
  const action = target.dataset.action;
  if (!action) return;
  const card = target.closest<HTMLElement>("[data-candidate]");
  const cid = card?.dataset.candidate;
  if (action === "accept" && cid) void decide(cid, "accept");
  else if (action === "reject" && cid) void decide(cid, "reject");
  else if (action === "edit" && cid) {
    const current = queueState?.cards.find((c) => c.candidate_id === cid)?.text ?? "";
    const text = prompt("corrected sentence", current);
    if (text && text.trim()) void decide(cid, "edited", text.trim());
  } else if (action === "retry") void flushQueue();
  else if (action === "submit" && queueState) {
    void api.submit(queueState.sessionId).then(() => showQueue(queueState!.protocol));
  } else if (action === "prev-page" && queueState) {
    queueState.page = Math.max(0, queueState.page - 1);
    paintQueue();
  } else if (action === "next-page" && queueState) {
    queueState.page += 1;
    paintQueue();
  } else if (action === "arb-accept" || action === "arb-reject") {
    const row = target.closest<HTMLElement>("[data-span]");
    const section = target.closest<HTMLElement>("[data-protocol]");
    if (row?.dataset.span && section?.dataset.protocol) {
      const verdicts = (arbiterVerdicts[section.dataset.protocol] ??= {});
      verdicts[row.dataset.span] = action === "arb-accept" ? "accept" : "reject";
      void showArbitration(section.dataset.protocol);
    }
  } else if (action === "finalize") {
    const section = target.closest<HTMLElement>("[data-protocol]");
    const protocol = section?.dataset.protocol;
    if (protocol) {
      void api
        .arbitrate(protocol, arbiterVerdicts[protocol] ?? {})
        .then(() => showArbitration(protocol))
        .catch((err) => alert(`finalize failed: ${err.message}`));
    }
  }
});

app.addEventListener("submit", (event) => {
  const form = event.target as HTMLFormElement;
  if (form.dataset.action !== "add-goal" || !queueState) return;
  event.preventDefault();
  const input = form.elements.namedItem("span") as HTMLInputElement;
  const text = input.value.trim();
  if (!text) return;
  void api.addManualSpan(queueState.sessionId, text).then(() => {
    input.value = "";
    return showQueue(queueState!.protocol);
  });
});

document.addEventListener("keydown", (event) => {
  if (!queueState || event.target instanceof HTMLInputElement) return;
  const focused = document.activeElement?.closest?.("[data-candidate]") as HTMLElement | null;
  const cid = focused?.dataset.candidate;
  if (event.key === "a" && cid) void decide(cid, "accept");
  else if (event.key === "r" && cid) void decide(cid, "reject");
  else if (event.key === "j" || event.key === "k") {
    const cards = Array.from(app.querySelectorAll<HTMLElement>("[data-candidate]"));
    const idx = focused ? cards.indexOf(focused) : -1;
    const next = cards[event.key === "j" ? Math.min(idx + 1, cards.length - 1) : Math.max(idx - 1, 0)];
    next?.focus();
  }
});

window.addEventListener("hashchange", route);
route();
