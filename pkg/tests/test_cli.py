import json
from pathlib import Path

import pytest

from aifg.cli import main

from conftest import DATASET_DIR, GOLDEN_DIR, TRANSCRIPT_PATH

NSSK_DIR = DATASET_DIR / "NSSK"


def run(*argv) -> int:
    return main([str(a) for a in argv])


def read_jsonl(path: Path) -> list[dict]:
    return [json.loads(l) for l in path.read_text().splitlines() if l.strip()]


def test_ingest_produces_valid_chunks(tmp_path):
    doc = tmp_path / "doc.txt"
    doc.write_text(
        "1. Overview\nThe handshake establishes keys. Peers exchange nonces first.\n"
        "2. Goals\nThe key must stay secret. Peers must agree on the nonces.\n"
        "3. References\n[1] A book. [2] A paper.\n"
    )
    out = tmp_path / "chunks.jsonl"
    assert run("ingest", "--in", doc, "--protocol", "Demo", "--drop-noise",
               "--window", 60, "--overlap", 10, "--out", out) == 0
    rows = read_jsonl(out)
    assert rows[0]["doc_id"] == "demo"
    assert all({"doc_id", "index", "start", "end", "text", "overlaps_previous"} <= set(r) for r in rows)
    body = "".join(r["text"][r["overlaps_previous"]:] for r in rows)
    assert "References" not in body
    assert "key must stay secret" in body


def test_extract_replays_golden_transcript(tmp_path):
    out1 = tmp_path / "c1.jsonl"
    out2 = tmp_path / "c2.jsonl"
    for out in (out1, out2):
        assert run(
            "extract", "--chunks", NSSK_DIR / "chunks.jsonl",
            "--transcript", TRANSCRIPT_PATH, "--mode", "replay", "--out", out,
        ) == 0
    assert out1.read_bytes() == out2.read_bytes()
    rows = read_jsonl(out1)
    assert len(rows) == 3
    gt_spans = {r["span_text"] for r in read_jsonl(NSSK_DIR / "goals.jsonl")}
    assert {r["text"] for r in rows} == gt_spans


def test_evaluate_matches_committed_golden(tmp_path):
    out = tmp_path / "report.json"
    md = tmp_path / "report.md"
    assert run(
        "evaluate", "--dataset", DATASET_DIR,
        "--transcript", TRANSCRIPT_PATH, "--mode", "replay", "--out", out, "--md", md,
    ) == 0
    assert out.read_bytes() == (GOLDEN_DIR / "extraction_report.json").read_bytes()
    assert md.read_text() == (GOLDEN_DIR / "extraction_report.md").read_text()


def test_evaluate_formalization_stage(tmp_path):
    out = tmp_path / "report.json"
    assert run(
        "evaluate", "--dataset", DATASET_DIR, "--stage", "formalization", "--runs", 3,
        "--transcript", TRANSCRIPT_PATH, "--mode", "replay", "--out", out,
    ) == 0
    assert out.read_bytes() == (GOLDEN_DIR / "formalization_report.json").read_bytes()


def test_stats_stdout(capsys):
    assert run("stats", "--dataset", DATASET_DIR) == 0
    out = capsys.readouterr().out
    assert "| NSSK | 4 | 2 | 50.0% |" in out
    assert "**50.0%**" in out


def test_iaa_cli(tmp_path, capsys):
    a = tmp_path / "a.txt"
    b = tmp_path / "b.txt"
    a.write_text("span one.\nspan two.\nspan three.\n")
    b.write_text("Span One.\nspan four.\n")
    assert run("iaa", "--a", a, "--b", b) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["a1"] == 3 and payload["a2"] == 2 and payload["shared"] == 1
    assert payload["jaccard_pct"] == "25.00"
    assert payload["dice_pct"] == "40.00"


def test_make_train_cli(tmp_path):
    out = tmp_path / "train.jsonl"
    assert run("make-train", "--dataset", DATASET_DIR, "--neg-ratio", 3, "--seed", 42,
               "--out", out) == 0
    rows = read_jsonl(out)
    assert len(rows) == 8
    for row in rows:
        assert set(row) == {"instruction", "input", "output"}
        assert isinstance(json.loads(row["output"]), list)
    out2 = tmp_path / "train2.jsonl"
    run("make-train", "--dataset", DATASET_DIR, "--neg-ratio", 3, "--seed", 42, "--out", out2)
    assert out.read_bytes() == out2.read_bytes()


def test_formalize_cli(tmp_path):
    candidates = tmp_path / "candidates.jsonl"
    run("extract", "--chunks", NSSK_DIR / "chunks.jsonl",
        "--transcript", TRANSCRIPT_PATH, "--mode", "replay", "--out", candidates)
    out = tmp_path / "properties.jsonl"
    assert run(
        "formalize", "--candidates", candidates, "--chunks", NSSK_DIR / "chunks.jsonl",
        "--flow", NSSK_DIR / "flow.json",
        "--transcript", TRANSCRIPT_PATH, "--mode", "replay", "--out", out,
    ) == 0
    rows = read_jsonl(out)
    assert len(rows) == 5
    assert all(r.get("source_goals") for r in rows)
    subtypes = sorted(r["subtype"] for r in rows)
    assert subtypes == ["aliveness", "aliveness", "injective_agreement",
                        "injective_agreement", "standard_secrecy"]


def test_cli_reports_pipeline_errors(tmp_path, capsys):
    missing = tmp_path / "nope"
    assert run("stats", "--dataset", missing) == 1
    assert "error:" in capsys.readouterr().err
