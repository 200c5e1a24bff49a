"""HTTP review service for the human-in-the-loop annotation workflow.

Annotators accept/reject/edit LLM candidate goals per protocol, add
missing spans, and submit; an arbitrator resolves the disagreements
between two submitted sessions, producing a goals.jsonl draft plus the
pre-arbitration agreement report. Every mutation is appended to a JSONL
decisions log before it is acknowledged, and startup replays that log, so
a crash loses nothing.

Draft entries inherit property links from existing ground-truth spans
when a reviewed span matches one; spans without a match export with empty
``property_ids`` and must be linked by hand before the strict dataset
loader accepts them.

Local-first: binds 127.0.0.1 by default. If AIFG_REVIEW_TOKEN is set,
every /api request must carry it (Authorization: Bearer or X-Review-Token).
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import Depends, FastAPI, Request
from fastapi.exceptions import HTTPException
from fastapi.responses import JSONResponse, PlainTextResponse, RedirectResponse

from .. import metrics
from ..errors import IncompleteArbitrationError, ReviewError, ReviewLogError
from ..extraction import CandidateSet
from .dataset import ProtocolRecord, SecGoalDataset

logger = logging.getLogger(__name__)

OPEN = "open"
SUBMITTED = "submitted"

ACCEPT = "accept"
REJECT = "reject"
EDITED = "edited"
VERDICTS = (ACCEPT, REJECT, EDITED)


@dataclass
class Decision:
    verdict: str
    text: str | None
    ts: float


@dataclass
class Session:
    session_id: str
    annotator_id: str
    protocol: str
    decisions: dict[str, Decision] = field(default_factory=dict)
    manual_spans: list[tuple[str, str, float]] = field(default_factory=list)  # (span_id, text, ts)
    state: str = OPEN


def accepted_spans(session: Session, candidates: CandidateSet) -> list[str]:
    """The session's final span set: accepted candidates (as written or as
    edited) plus manually added spans, in decision order."""
    spans = []
    for cid, decision in session.decisions.items():
        if decision.verdict == ACCEPT:
            idx = int(cid[1:])
            spans.append(candidates.candidates[idx].text)
        elif decision.verdict == EDITED:
            spans.append(decision.text or "")
    spans.extend(text for _sid, text, _ts in session.manual_spans)
    return [s for s in spans if s.strip()]


def arbitrate(
    session_a: Session,
    session_b: Session,
    arbiter_decisions: dict[str, str],
    record: ProtocolRecord,
    candidates: CandidateSet,
) -> tuple[list[dict], metrics.IaaReport]:
    """Merge two submitted sessions under the arbiter's verdicts.

    Agreements pass through; every disagreement needs an explicit accept
    or reject. Returns goals.jsonl draft rows and the agreement report
    computed on the pre-arbitration sets.
    """
    if session_a.state != SUBMITTED or session_b.state != SUBMITTED:
        raise ReviewError("both sessions must be submitted before arbitration")

    spans_a = accepted_spans(session_a, candidates)
    spans_b = accepted_spans(session_b, candidates)
    report = metrics.iaa(spans_a, spans_b, protocol=record.name)

    manual_norms = {
        metrics.normalize_span(text)
        for s in (session_a, session_b)
        for _sid, text, _ts in s.manual_spans
    }

    raw_by_norm: dict[str, str] = {}
    order: list[str] = []
    for raw in spans_a + spans_b:
        norm = metrics.normalize_span(raw)
        if norm and norm not in raw_by_norm:
            raw_by_norm[norm] = raw
            order.append(norm)
    norms_a = {metrics.normalize_span(s) for s in spans_a}
    norms_b = {metrics.normalize_span(s) for s in spans_b}

    verdict_by_norm = {metrics.normalize_span(k): v for k, v in arbiter_decisions.items()}
    final: list[str] = []
    pending: list[str] = []
    for norm in order:
        if norm in norms_a and norm in norms_b:
            final.append(norm)
        else:
            verdict = verdict_by_norm.get(norm)
            if verdict is None:
                pending.append(raw_by_norm[norm])
            elif verdict == ACCEPT:
                final.append(norm)
            elif verdict != REJECT:
                raise ReviewError(f"arbiter verdict must be accept or reject, got {verdict!r}")
    if pending:
        raise IncompleteArbitrationError(pending)

    norm_chunks = {c.index: metrics.normalize_span(c.text) for c in record.chunks}
    norm_gt = [(entry, metrics.normalize_span(entry.span_text)) for entry in record.goal_spans]
    draft = []
    for norm in final:
        raw = raw_by_norm[norm]
        chunk_indices = [ci for ci, nc in sorted(norm_chunks.items()) if norm in nc]
        property_ids: set[str] = set()
        for entry, ng in norm_gt:
            if metrics.spans_match(norm, ng):
                property_ids.update(entry.property_ids)
        draft.append(
            {
                "span_text": raw,
                "chunk_indices": chunk_indices,
                "property_ids": sorted(property_ids),
                "origin": "annotator" if norm in manual_norms else "candidate",
            }
        )
    return draft, report


def _iaa_json(report: metrics.IaaReport) -> dict:
    def row(r: metrics.IaaRow) -> dict:
        return {
            "protocol": r.protocol,
            "a1": r.a1,
            "a2": r.a2,
            "shared": r.shared,
            "only_a1": r.only_a1,
            "only_a2": r.only_a2,
            "jaccard": r.jaccard,
            "dice": r.dice,
            "jaccard_pct": metrics.fmt_pct(r.jaccard, 2),
            "dice_pct": metrics.fmt_pct(r.dice, 2),
            "degenerate": r.degenerate,
        }

    return {"rows": [row(r) for r in report.rows], "pooled": row(report.pooled)}


class ReviewService:
    """In-memory state rebuilt from (and persisted to) the decisions log."""

    def __init__(
        self,
        ds: SecGoalDataset,
        candidates: dict[str, CandidateSet],
        log_path: str | Path,
    ):
        self.ds = ds
        self.candidates = candidates
        self.log_path = Path(log_path)
        self.sessions: dict[str, Session] = {}
        self.arbitrations: dict[str, dict] = {}
        self._lock = threading.Lock()
        self._next_session = 1
        for name in candidates:
            ds.get(name)  # unknown protocol -> DatasetError
        if self.log_path.exists():
            self._replay_log()

    # -- log ------------------------------------------------------------------

    def _append(self, event: dict) -> None:
        with open(self.log_path, "a", encoding="utf-8") as f:
            f.write(json.dumps(event, ensure_ascii=False, sort_keys=True) + "\n")
            f.flush()
            os.fsync(f.fileno())

    def _replay_log(self) -> None:
        with open(self.log_path, encoding="utf-8") as f:
            for line_no, line in enumerate(f, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    event = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise ReviewLogError(f"{self.log_path}:{line_no}: invalid JSON: {exc}") from exc
                try:
                    self._apply(event)
                except (ReviewError, KeyError, IndexError, ValueError) as exc:
                    raise ReviewLogError(f"{self.log_path}:{line_no}: cannot replay event: {exc}") from exc
        logger.info("replayed %d session(s) from %s", len(self.sessions), self.log_path)

    def _apply(self, event: dict) -> None:
        kind = event["event"]
        ts = event.get("ts", 0.0)
        if kind == "session_created":
            sid = event["session_id"]
            if sid in self.sessions:
                raise ReviewError(f"duplicate session {sid}")
            self.sessions[sid] = Session(sid, event["annotator_id"], event["protocol"])
            num = int(sid.split("-")[1])
            self._next_session = max(self._next_session, num + 1)
        elif kind == "decision":
            session = self._open_session(event["session_id"])
            cid = event["candidate_id"]
            self._card_for(session.protocol, cid)  # validates the id
            verdict = event["verdict"]
            if verdict not in VERDICTS:
                raise ReviewError(f"unknown verdict {verdict!r}")
            text = event.get("text")
            if verdict == EDITED and not (text or "").strip():
                raise ReviewError("edited verdict requires replacement text")
            session.decisions[cid] = Decision(verdict, text, ts)
        elif kind == "manual_span":
            session = self._open_session(event["session_id"])
            text = event["text"]
            if not text.strip():
                raise ReviewError("manual span text must be non-empty")
            session.manual_spans.append((event["span_id"], text, ts))
        elif kind == "submit":
            session = self._open_session(event["session_id"])
            session.state = SUBMITTED
        elif kind == "arbitration":
            protocol = event["protocol"]
            self.ds.get(protocol)
            self.arbitrations[protocol] = {
                "draft": event["draft"],
                "iaa": event["iaa"],
                "sessions": event["sessions"],
            }
        else:
            raise ReviewError(f"unknown event kind {kind!r}")

    # -- state helpers -----------------------------------------------------------

    def _session(self, sid: str) -> Session:
        if sid not in self.sessions:
            raise ReviewError(f"unknown session {sid!r}")
        return self.sessions[sid]

    def _open_session(self, sid: str) -> Session:
        session = self._session(sid)
        if session.state != OPEN:
            raise ReviewError(f"session {sid} is submitted and immutable")
        return session

    def _candidates(self, protocol: str) -> CandidateSet:
        self.ds.get(protocol)
        if protocol not in self.candidates:
            raise ReviewError(f"no candidates loaded for protocol {protocol!r}")
        return self.candidates[protocol]

    def _card_for(self, protocol: str, cid: str) -> None:
        cs = self._candidates(protocol)
        if not cid.startswith("c"):
            raise ReviewError(f"malformed candidate id {cid!r}")
        try:
            idx = int(cid[1:])
        except ValueError:
            raise ReviewError(f"malformed candidate id {cid!r}") from None
        if not 0 <= idx < len(cs.candidates):
            raise ReviewError(f"unknown candidate id {cid!r}")

    def candidate_cards(self, protocol: str) -> list[dict]:
        cs = self._candidates(protocol)
        record = self.ds.get(protocol)
        chunk_by_index = {c.index: c for c in record.chunks}
        cards = []
        for i, cand in enumerate(cs.candidates):
            chunk = chunk_by_index.get(cand.chunk_index)
            chunk_text = chunk.text if chunk else ""
            pos = chunk_text.find(cand.text)
            cards.append(
                {
                    "candidate_id": f"c{i}",
                    "text": cand.text,
                    "chunk_index": cand.chunk_index,
                    "non_verbatim": cand.non_verbatim,
                    "chunk_text": chunk_text,
                    "highlight": {"start": pos, "end": pos + len(cand.text)} if pos >= 0 else None,
                }
            )
        return cards

    def submitted_pair(self, protocol: str) -> tuple[Session, Session]:
        submitted = [
            s for s in self.sessions.values() if s.protocol == protocol and s.state == SUBMITTED
        ]
        if len(submitted) < 2:
            raise ReviewError(f"protocol {protocol!r} has {len(submitted)} submitted session(s); need 2")
        return submitted[0], submitted[1]

    # -- mutations ------------------------------------------------------------------

    def create_session(self, annotator_id: str, protocol: str) -> str:
        with self._lock:
            self._candidates(protocol)
            sid = f"sess-{self._next_session}"
            event = {
                "event": "session_created",
                "ts": time.time(),
                "session_id": sid,
                "annotator_id": annotator_id,
                "protocol": protocol,
            }
            self._apply(event)
            self._append(event)
            return sid

    def record_decision(self, sid: str, candidate_id: str, verdict: str, text: str | None) -> None:
        with self._lock:
            event = {
                "event": "decision",
                "ts": time.time(),
                "session_id": sid,
                "candidate_id": candidate_id,
                "verdict": verdict,
            }
            if text is not None:
                event["text"] = text
            self._apply(event)
            self._append(event)

    def add_manual_span(self, sid: str, text: str) -> str:
        with self._lock:
            session = self._open_session(sid)
            span_id = f"m{len(session.manual_spans)}"
            event = {
                "event": "manual_span",
                "ts": time.time(),
                "session_id": sid,
                "span_id": span_id,
                "text": text,
            }
            self._apply(event)
            self._append(event)
            return span_id

    def submit(self, sid: str) -> None:
        with self._lock:
            event = {"event": "submit", "ts": time.time(), "session_id": sid}
            self._apply(event)
            self._append(event)

    def run_arbitration(self, protocol: str, verdicts: dict[str, str]) -> dict:
        with self._lock:
            a, b = self.submitted_pair(protocol)
            record = self.ds.get(protocol)
            draft, report = arbitrate(a, b, verdicts, record, self._candidates(protocol))
            result = {
                "draft": draft,
                "iaa": _iaa_json(report),
                "sessions": [a.session_id, b.session_id],
            }
            event = {"event": "arbitration", "ts": time.time(), "protocol": protocol, **result}
            self._apply(event)
            self._append(event)
            return result

    # -- queries ------------------------------------------------------------------

    def iaa_for(self, protocol: str | None) -> metrics.IaaReport:
        if protocol:
            a, b = self.submitted_pair(protocol)
            cs = self._candidates(protocol)
            return metrics.iaa(accepted_spans(a, cs), accepted_spans(b, cs), protocol=protocol)
        pools = {}
        for record in self.ds.protocols:
            try:
                a, b = self.submitted_pair(record.name)
            except ReviewError:
                continue
            cs = self._candidates(record.name)
            pools[record.name] = (accepted_spans(a, cs), accepted_spans(b, cs))
        if not pools:
            raise ReviewError("no protocol has two submitted sessions yet")
        return metrics.iaa_by_protocol(pools)

    def disagreement_board(self, protocol: str) -> dict:
        try:
            a, b = self.submitted_pair(protocol)
        except ReviewError as exc:
            return {"ready": False, "reason": str(exc), "agreements": [], "disagreements": []}
        cs = self._candidates(protocol)
        spans_a = accepted_spans(a, cs)
        spans_b = accepted_spans(b, cs)
        norms_a = {metrics.normalize_span(s): s for s in spans_a}
        norms_b = {metrics.normalize_span(s): s for s in spans_b}
        agreements = [norms_a[n] for n in norms_a if n in norms_b]
        disagreements = []
        for n, raw in norms_a.items():
            if n not in norms_b:
                disagreements.append({"span": raw, "in_sessions": [a.session_id]})
        for n, raw in norms_b.items():
            if n not in norms_a:
                disagreements.append({"span": raw, "in_sessions": [b.session_id]})
        return {
            "ready": True,
            "sessions": [a.session_id, b.session_id],
            "agreements": agreements,
            "disagreements": disagreements,
            "arbitrated": protocol in self.arbitrations,
        }


# --- HTTP layer ---------------------------------------------------------------------


def _err(status: int, code: str, message: str, details=None) -> HTTPException:
    return HTTPException(status_code=status, detail={"code": code, "message": message, "details": details})


def create_app(
    ds: SecGoalDataset,
    candidates: dict[str, CandidateSet],
    log_path: str | Path,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    service = ReviewService(ds, candidates, log_path)
    app = FastAPI(title="aifg review service")
    app.state.review = service

    def auth(request: Request) -> None:
        token = os.environ.get("AIFG_REVIEW_TOKEN")
        if not token:
            return
        supplied = request.headers.get("x-review-token")
        bearer = request.headers.get("authorization", "")
        if supplied == token or bearer == f"Bearer {token}":
            return
        raise _err(401, "unauthorized", "missing or wrong review token")

    @app.exception_handler(HTTPException)
    async def handle_http_error(_request, exc: HTTPException):
        detail = exc.detail if isinstance(exc.detail, dict) else {"code": "error", "message": str(exc.detail), "details": None}
        return JSONResponse(status_code=exc.status_code, content=detail)

    @app.exception_handler(ReviewError)
    async def handle_review_error(_request, exc: ReviewError):
        return JSONResponse(status_code=409, content={"code": "review_error", "message": str(exc), "details": None})

    @app.exception_handler(IncompleteArbitrationError)
    async def handle_incomplete(_request, exc: IncompleteArbitrationError):
        return JSONResponse(
            status_code=409,
            content={"code": "incomplete_arbitration", "message": str(exc), "details": {"pending": exc.pending}},
        )

    dep = [Depends(auth)]

    @app.get("/api/protocols", dependencies=dep)
    def list_protocols():
        out = []
        for record in ds.protocols:
            sessions = [
                {"session_id": s.session_id, "annotator_id": s.annotator_id, "state": s.state}
                for s in service.sessions.values()
                if s.protocol == record.name
            ]
            out.append(
                {
                    "name": record.name,
                    "chunks": len(record.chunks),
                    "candidates": len(candidates.get(record.name, CandidateSet(doc_id=""))),
                    "sessions": sessions,
                }
            )
        return {"protocols": out}

    @app.get("/api/protocols/{name}/candidates", dependencies=dep)
    def protocol_candidates(name: str):
        try:
            cards = service.candidate_cards(name)
        except Exception as exc:
            raise _err(404, "not_found", str(exc))
        return {"protocol": name, "candidates": cards}

    @app.post("/api/sessions", status_code=201, dependencies=dep)
    def create_session(body: dict):
        annotator = body.get("annotator_id")
        protocol = body.get("protocol")
        if not annotator or not protocol:
            raise _err(422, "bad_request", "annotator_id and protocol are required")
        sid = service.create_session(annotator, protocol)
        return {"session_id": sid}

    @app.get("/api/sessions/{sid}/decisions", dependencies=dep)
    def get_decisions(sid: str):
        session = service._session(sid)
        total = len(service._candidates(session.protocol).candidates)
        return {
            "session_id": sid,
            "protocol": session.protocol,
            "annotator_id": session.annotator_id,
            "state": session.state,
            "decisions": {
                cid: {"verdict": d.verdict, "text": d.text, "ts": d.ts}
                for cid, d in session.decisions.items()
            },
            "manual_spans": [
                {"span_id": span_id, "text": text, "ts": ts} for span_id, text, ts in session.manual_spans
            ],
            "progress": {"decided": len(session.decisions), "total": total},
        }

    @app.post("/api/sessions/{sid}/decisions", dependencies=dep)
    def post_decision(sid: str, body: dict):
        if "candidate_id" in body and body["candidate_id"] is not None:
            verdict = body.get("verdict")
            if verdict not in VERDICTS:
                raise _err(422, "bad_request", f"verdict must be one of {VERDICTS}")
            service.record_decision(sid, body["candidate_id"], verdict, body.get("text"))
            return {"ok": True}
        text = body.get("text", "")
        if not text.strip():
            raise _err(422, "bad_request", "manual span needs non-empty text")
        span_id = service.add_manual_span(sid, text)
        return {"ok": True, "span_id": span_id}

    @app.post("/api/sessions/{sid}/submit", dependencies=dep)
    def submit_session(sid: str):
        service.submit(sid)
        return {"ok": True, "state": SUBMITTED}

    @app.get("/api/iaa", dependencies=dep)
    def get_iaa(protocol: str | None = None):
        return _iaa_json(service.iaa_for(protocol))

    @app.get("/api/arbitration/{protocol}", dependencies=dep)
    def get_arbitration(protocol: str):
        return service.disagreement_board(protocol)

    @app.post("/api/arbitration/{protocol}", dependencies=dep)
    def post_arbitration(protocol: str, body: dict):
        verdicts = body.get("verdicts", {})
        if not isinstance(verdicts, dict):
            raise _err(422, "bad_request", "verdicts must be an object of span -> accept|reject")
        return service.run_arbitration(protocol, verdicts)

    @app.get("/api/export/{protocol}/goals.jsonl", dependencies=dep)
    def export_goals(protocol: str):
        if protocol not in service.arbitrations:
            raise _err(404, "not_arbitrated", f"protocol {protocol!r} has not been arbitrated")
        rows = service.arbitrations[protocol]["draft"]
        body = "".join(json.dumps(r, ensure_ascii=False) + "\n" for r in rows)
        return PlainTextResponse(body, media_type="application/jsonl")

    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=str(ui_dir), html=True), name="ui")

        @app.get("/", include_in_schema=False)
        def root():
            return RedirectResponse("/ui/")

    return app


def serve_review(
    ds: SecGoalDataset,
    candidates: dict[str, CandidateSet],
    log_path: str | Path,
    bind_addr: str = "127.0.0.1:8977",
    ui_dir: str | Path | None = None,
) -> None:
    """Run the review service until interrupted."""
    import uvicorn

    app = create_app(ds, candidates, log_path, ui_dir=ui_dir)
    host, _, port = bind_addr.partition(":")
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8977), log_level="info")
