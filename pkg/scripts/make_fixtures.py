#!/usr/bin/env python
"""Regenerate the fixture dataset, golden transcript, and golden reports.

Run from the repo root:

    python scripts/make_fixtures.py

All outputs under fixtures/ are committed; this script exists so they can
be rebuilt deterministically after deliberate changes to prompts, chunking
defaults, or fixture content. It asserts the shape the test suite relies
on (chunk counts, goal-chunk density, and the exact evaluation counts)
before writing anything permanent.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from aifg.corpus import PLAIN_TEXT, ChunkConfig, ingest_document, segment, verify_chunks
from aifg.extraction import PromptConfig, build_extraction_prompt
from aifg.formalization import FormalizationContext, ProtocolFlow, build_formalization_prompt, build_index, retrieve
from aifg.gateway import REPLAY, Gateway, Transcript, request_hash
from aifg.harness.dataset import load_dataset
from aifg.harness.evaluate import run_extraction_eval, run_formalization_eval
from aifg.metrics import fmt_pct, normalize_span
from aifg.schema import default_templates, validate_property

FIXTURES = ROOT / "fixtures"
DATASET_DIR = FIXTURES / "secgoal-mini"
TRANSCRIPT_PATH = FIXTURES / "transcripts" / "golden.jsonl"
GOLDEN_DIR = FIXTURES / "golden"

CHUNK_CFG = ChunkConfig(window_chars=300, overlap_chars=40)
TOP_K = 5

NSSK_TEXT = """\
1. Setting
The exchange distributes a fresh session key to two principals with the help of a trusted key server. Alice opens the run by sending her identity, the identity of Bob, and a newly drawn nonce Na to the server over the shared network. Every message on the wire uses a compact tagged encoding that fixes field order and length prefixes.
2. Ticket delivery
The server replies with a package sealed under the long-term key KAS that Alice shares with it. Inside the package Alice finds the session key KAB, her nonce Na echoed back, the name of Bob, and a second ticket sealed under KBS for forwarding. Bob unwraps the forwarded ticket, draws his own nonce Nb, and challenges Alice with it under the fresh session key; Alice proves receipt by returning a simple transformation of Nb.
3. Intended guarantees
The session key KAB must remain secret among Alice, Bob, and the server. Alice and Bob must reach injective agreement on the nonces Na and Nb once a run completes. Each principal must obtain evidence that the peer was alive during the current exchange. Operators should rotate the long-term keys KAS and KBS on a regular maintenance schedule.
"""

KAOCHOW_TEXT = """\
1. Setting
This exchange follows the classic one-pass design in which the server vouches for a fresh key without storing per-run state. Alice asks the trusted server to introduce her to Bob by naming both parties and a nonce Na of her own. Wire frames carry a version octet followed by length-prefixed fields in network byte order.
2. Exchange
The server emits a single credential that binds Alice, Bob, the nonce Na, and the new session key KAB under each party's long-term key, KAS for Alice and KBS for Bob. Bob keeps his half of the credential, notes the nonce, and answers Alice with her nonce Na cited under KAB together with a fresh nonce Nb of his own. Alice closes the run by citing Nb back under KAB, and stations are expected to discard duplicate frames silently.
3. Intended guarantees
The session key KAB must stay confidential to Alice, Bob, and the trusted server. Confidentiality of KAB must persist even if the long-term keys are later exposed. Alice must reach injective agreement with Bob on the nonces Na and Nb. Bob must reach injective agreement with Alice on the nonces Na and Nb. A station accepting a credential must know its peer participated in the same run.
"""

NSSK = {
    "name": "NSSK",
    "text": NSSK_TEXT,
    "properties": {
        "P1": {"type": "Secrecy", "subtype": "standard_secrecy", "secretData": "KAB",
               "secretType": "key", "sharedBetween": ["Alice", "Bob", "Server"],
               "description": "The session key KAB stays confidential to the three principals."},
        "P2": {"type": "Authentication", "subtype": "injective_agreement", "asserter": "Alice",
               "subject": "Bob", "agreementValues": ["Na", "Nb"],
               "description": "Alice agrees with Bob on the run's nonces, injectively."},
        "P3": {"type": "Authentication", "subtype": "injective_agreement", "asserter": "Bob",
               "subject": "Alice", "agreementValues": ["Na", "Nb"],
               "description": "Bob agrees with Alice on the run's nonces, injectively."},
        "P4": {"type": "Authentication", "subtype": "aliveness", "asserter": "Alice", "subject": "Bob",
               "description": "Alice obtains evidence that Bob is alive in the run."},
        "P5": {"type": "Authentication", "subtype": "aliveness", "asserter": "Bob", "subject": "Alice",
               "description": "Bob obtains evidence that Alice is alive in the run."},
    },
    "goals": [
        ("The session key KAB must remain secret among Alice, Bob, and the server.", ["P1"]),
        ("Alice and Bob must reach injective agreement on the nonces Na and Nb once a run completes.", ["P2", "P3"]),
        ("Each principal must obtain evidence that the peer was alive during the current exchange.", ["P4", "P5"]),
    ],
    "noise": [],
    "flow": {
        "protocol_name": "NSSK",
        "roles": ["Alice", "Bob", "Server"],
        "messages": [
            {"step": 1, "from": "Alice", "to": "Server", "payload": ["A", "B", "Na"]},
            {"step": 2, "from": "Server", "to": "Alice", "payload": ["Na", "B", "KAB", "TicketB"]},
            {"step": 3, "from": "Alice", "to": "Bob", "payload": ["TicketB"]},
            {"step": 4, "from": "Bob", "to": "Alice", "payload": ["Nb"]},
            {"step": 5, "from": "Alice", "to": "Bob", "payload": ["Nb"]},
        ],
        "variables": {
            "A": {"kind": "identity", "description": "identity of Alice"},
            "B": {"kind": "identity", "description": "identity of Bob"},
            "Na": {"kind": "nonce", "description": "nonce drawn by Alice"},
            "Nb": {"kind": "nonce", "description": "nonce drawn by Bob"},
            "KAB": {"kind": "key", "description": "fresh session key"},
            "KAS": {"kind": "key", "description": "long-term key of Alice and the server"},
            "KBS": {"kind": "key", "description": "long-term key of Bob and the server"},
            "TicketB": {"kind": "payload", "description": "ticket forwarded to Bob"},
        },
    },
    # #Props, Ext., TP, #Hit, FN, FP and the displayed percentages.
    "expected_row": (5, 3, 3, 5, 0, 0, "100.0", "100.0", "100.0"),
}

KAOCHOW = {
    "name": "Kao-Chow-v1",
    "text": KAOCHOW_TEXT,
    "properties": {
        "P1": {"type": "Secrecy", "subtype": "standard_secrecy", "secretData": "KAB",
               "secretType": "key", "sharedBetween": ["Alice", "Bob", "Server"],
               "description": "The session key KAB stays confidential to the three principals."},
        "P2": {"type": "Secrecy", "subtype": "forward_secrecy", "secretData": "KAB",
               "sharedBetween": ["Alice", "Bob"],
               "description": "KAB stays confidential even after long-term key exposure."},
        "P3": {"type": "Authentication", "subtype": "injective_agreement", "asserter": "Alice",
               "subject": "Bob", "agreementValues": ["Na", "Nb"],
               "description": "Alice agrees with Bob on the run's nonces, injectively."},
        "P4": {"type": "Authentication", "subtype": "injective_agreement", "asserter": "Bob",
               "subject": "Alice", "agreementValues": ["Na", "Nb"],
               "description": "Bob agrees with Alice on the run's nonces, injectively."},
        "P5": {"type": "Authentication", "subtype": "aliveness", "asserter": "Alice", "subject": "Bob",
               "description": "A station accepting a credential knows its peer took part."},
    },
    "goals": [
        ("The session key KAB must stay confidential to Alice, Bob, and the trusted server.", ["P1"]),
        ("Confidentiality of KAB must persist even if the long-term keys are later exposed.", ["P2"]),
        ("Alice must reach injective agreement with Bob on the nonces Na and Nb.", ["P3"]),
        ("Bob must reach injective agreement with Alice on the nonces Na and Nb.", ["P4"]),
        ("A station accepting a credential must know its peer participated in the same run.", ["P5"]),
    ],
    "noise": [
        "Wire frames carry a version octet followed by length-prefixed fields in network byte order.",
        "Alice closes the run by citing Nb back under KAB, and stations are expected to discard duplicate frames silently.",
    ],
    "flow": {
        "protocol_name": "Kao-Chow-v1",
        "roles": ["Alice", "Bob", "Server"],
        "messages": [
            {"step": 1, "from": "Alice", "to": "Server", "payload": ["A", "B", "Na"]},
            {"step": 2, "from": "Server", "to": "Bob", "payload": ["Cred"]},
            {"step": 3, "from": "Bob", "to": "Alice", "payload": ["Cred", "Na", "Nb"]},
            {"step": 4, "from": "Alice", "to": "Bob", "payload": ["Nb"]},
        ],
        "variables": {
            "A": {"kind": "identity", "description": "identity of Alice"},
            "B": {"kind": "identity", "description": "identity of Bob"},
            "Na": {"kind": "nonce", "description": "nonce drawn by Alice"},
            "Nb": {"kind": "nonce", "description": "nonce drawn by Bob"},
            "KAB": {"kind": "key", "description": "fresh session key"},
            "KAS": {"kind": "key", "description": "long-term key of Alice and the server"},
            "KBS": {"kind": "key", "description": "long-term key of Bob and the server"},
            "Cred": {"kind": "payload", "description": "server credential binding the run"},
        },
    },
    "expected_row": (5, 7, 5, 5, 0, 2, "100.0", "71.4", "83.3"),
}


def write_jsonl(path: Path, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def build_protocol(spec: dict, transcript: list[tuple[str, str]]) -> None:
    name = spec["name"]
    doc = ingest_document(spec["text"].encode("utf-8"), PLAIN_TEXT, name)
    chunks = segment(doc, CHUNK_CFG)
    verify_chunks(doc.body, chunks, CHUNK_CFG.sentence_delimiters)
    assert len(chunks) == 4, f"{name}: expected 4 chunks, got {len(chunks)}"

    norm_chunks = {c.index: normalize_span(c.text) for c in chunks}
    goal_rows = []
    goal_chunks: set[int] = set()
    for span, pids in spec["goals"]:
        indices = [ci for ci, nc in sorted(norm_chunks.items()) if normalize_span(span) in nc]
        assert indices, f"{name}: goal span not found in any chunk: {span!r}"
        goal_chunks.update(indices)
        goal_rows.append({"span_text": span, "chunk_indices": indices, "property_ids": pids})
    assert len(goal_chunks) == 2, f"{name}: expected 2 goal chunks, got {sorted(goal_chunks)}"

    templates = default_templates()
    for pid, raw in spec["properties"].items():
        validate_property(dict(raw), templates)

    proto_dir = DATASET_DIR / name
    proto_dir.mkdir(parents=True, exist_ok=True)
    (proto_dir / "document.txt").write_text(doc.body, encoding="utf-8")
    write_jsonl(proto_dir / "chunks.jsonl", (c.to_json() for c in chunks))
    write_jsonl(proto_dir / "goals.jsonl", goal_rows)
    write_jsonl(
        proto_dir / "properties.jsonl",
        ({"id": pid, **raw} for pid, raw in spec["properties"].items()),
    )
    (proto_dir / "flow.json").write_text(
        json.dumps(spec["flow"], indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )

    # Extraction responses: the goal sentences (and planned noise) assigned
    # to every chunk that contains them verbatim; empty chunks answer [].
    sentences = [span for span, _ in spec["goals"]] + spec["noise"]
    cfg = PromptConfig()
    for chunk in chunks:
        present = [s for s in sentences if s in chunk.text]
        present.sort(key=lambda s: chunk.text.find(s))
        response = json.dumps(present, ensure_ascii=False)
        transcript.append((request_hash(build_extraction_prompt(chunk, cfg)), response))

    # Formalization responses: each annotated span maps to exactly its
    # linked ground-truth properties.
    flow = ProtocolFlow.from_json(spec["flow"])
    gateway = Gateway(mode=REPLAY)  # embeddings only
    index = build_index(list(chunks), gateway)
    for row in goal_rows:
        retrieved = tuple(retrieve(index, row["span_text"], TOP_K, gateway))
        ctx = FormalizationContext(
            goal=row["span_text"], retrieved=retrieved, flow=flow, templates=templates
        )
        response = json.dumps(
            [spec["properties"][pid] for pid in row["property_ids"]], ensure_ascii=False
        )
        transcript.append((request_hash(build_formalization_prompt(ctx)), response))


def main() -> int:
    transcript: list[tuple[str, str]] = []
    DATASET_DIR.mkdir(parents=True, exist_ok=True)
    (DATASET_DIR / "dataset.json").write_text('{"version": "mini-1"}\n', encoding="utf-8")
    for spec in (KAOCHOW, NSSK):
        build_protocol(spec, transcript)

    TRANSCRIPT_PATH.parent.mkdir(parents=True, exist_ok=True)
    Transcript(transcript).save(TRANSCRIPT_PATH)

    # Replay the whole pipeline and freeze the reports.
    ds = load_dataset(DATASET_DIR)
    gw = Gateway(transcript=Transcript.load(TRANSCRIPT_PATH), mode=REPLAY)
    ext_report = run_extraction_eval(ds, gw, PromptConfig())
    for spec in (KAOCHOW, NSSK):
        row = next(r for r in ext_report.rows if r.protocol == spec["name"])
        got = (
            row.n_props, row.extracted, row.tp, row.n_hits, row.fn, row.fp,
            fmt_pct(row.recall), fmt_pct(row.precision), fmt_pct(row.f1),
        )
        assert got == spec["expected_row"], f"{spec['name']}: {got} != {spec['expected_row']}"

    form_report = run_formalization_eval(ds, gw, runs=3, k=TOP_K)
    for row in form_report.rows:
        assert row.skipped is None, f"{row.protocol} skipped: {row.skipped}"
        values = (row.recall_mean, row.precision_mean, row.f1_mean, row.acc_slot_mean)
        stds = (row.recall_std, row.precision_std, row.f1_std, row.acc_slot_std)
        assert values == (1.0, 1.0, 1.0, 1.0), f"{row.protocol}: {values}"
        assert stds == (0.0, 0.0, 0.0, 0.0), f"{row.protocol}: {stds}"

    GOLDEN_DIR.mkdir(parents=True, exist_ok=True)
    (GOLDEN_DIR / "extraction_report.json").write_bytes(ext_report.to_json_bytes())
    (GOLDEN_DIR / "extraction_report.md").write_text(ext_report.to_markdown(), encoding="utf-8")
    (GOLDEN_DIR / "formalization_report.json").write_bytes(form_report.to_json_bytes())

    stats_rows = [(p.name, len(p.chunks), len(p.goal_chunk_indices)) for p in ds.protocols]
    print("fixture dataset:", stats_rows)
    print(f"transcript entries: {len(transcript)} -> {TRANSCRIPT_PATH}")
    print("golden reports written to", GOLDEN_DIR)
    return 0


if __name__ == "__main__":
    sys.exit(main())
