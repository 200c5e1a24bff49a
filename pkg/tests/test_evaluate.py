import json
import shutil

import pytest

from aifg.extraction import PromptConfig, build_extraction_prompt
from aifg.gateway import Gateway, REPLAY, Transcript, request_hash
from aifg.harness.dataset import load_dataset
from aifg.harness.evaluate import EvalReport, EvalRow, run_extraction_eval, run_formalization_eval
from aifg.metrics import fmt_pct

from conftest import DATASET_DIR, GOLDEN_DIR


def test_extraction_eval_reproduces_golden_rows(mini_dataset, replay_gateway):
    report = run_extraction_eval(mini_dataset, replay_gateway, PromptConfig())
    by_name = {r.protocol: r for r in report.rows}
    nssk = by_name["NSSK"]
    assert (nssk.n_props, nssk.extracted, nssk.tp, nssk.n_hits, nssk.fn, nssk.fp) == (5, 3, 3, 5, 0, 0)
    assert (fmt_pct(nssk.recall), fmt_pct(nssk.precision), fmt_pct(nssk.f1)) == ("100.0", "100.0", "100.0")
    kao = by_name["Kao-Chow-v1"]
    assert (kao.n_props, kao.extracted, kao.tp, kao.n_hits, kao.fn, kao.fp) == (5, 7, 5, 5, 0, 2)
    assert (fmt_pct(kao.recall), fmt_pct(kao.precision), fmt_pct(kao.f1)) == ("100.0", "71.4", "83.3")


def test_extraction_eval_bytes_match_committed_golden(mini_dataset, replay_gateway):
    report = run_extraction_eval(mini_dataset, replay_gateway, PromptConfig())
    golden = (GOLDEN_DIR / "extraction_report.json").read_bytes()
    assert report.to_json_bytes() == golden


def test_extraction_eval_deterministic(mini_dataset):
    from conftest import TRANSCRIPT_PATH

    runs = []
    for _ in range(2):
        gw = Gateway(transcript=Transcript.load(TRANSCRIPT_PATH), mode=REPLAY)
        runs.append(run_extraction_eval(mini_dataset, gw, PromptConfig()).to_json_bytes())
    assert runs[0] == runs[1]


def test_all_empty_transcript_yields_degenerate_precision(mini_dataset):
    cfg = PromptConfig()
    entries = []
    for record in mini_dataset.protocols:
        for chunk in record.chunks:
            entries.append((request_hash(build_extraction_prompt(chunk, cfg)), "[]"))
    gw = Gateway(transcript=Transcript(entries), mode=REPLAY)
    report = run_extraction_eval(mini_dataset, gw, cfg)
    for row in report.rows:
        assert row.extracted == 0
        assert row.degenerate_precision
        assert row.precision == 0.0 and row.recall == 0.0


def test_macro_average_conventions():
    f1_values = [100.0, 83.3, 71.2, 78.6, 74.1]
    rows = tuple(
        EvalRow(
            protocol=f"p{i}", n_props=1, extracted=1, tp=1, hits=("P1",), fn=0, fp=0,
            recall=1.0, precision=1.0, f1=v / 100.0,
        )
        for i, v in enumerate(f1_values)
    )
    report = EvalReport(rows=rows, match_threshold=0.6)
    avg = report.averages()
    # Mean of the displayed one-decimal row values.
    assert avg["mean_of_displayed_values"]["f1"] * 100 == pytest.approx(81.44)


def test_report_markdown_has_both_average_conventions(mini_dataset, replay_gateway):
    report = run_extraction_eval(mini_dataset, replay_gateway, PromptConfig())
    md = report.to_markdown()
    assert "| Protocol | #Props | Ext. | TP | #Hit | FN | FP | Recall | Prec. | F1 |" in md
    assert "Average (exact)" in md
    assert "Average (of displayed rows)" in md
    assert json.loads((GOLDEN_DIR / "extraction_report.json").read_text())["config"]["match_threshold"] == 0.6


def test_protocol_without_ground_truth_reported_failed(tmp_path, replay_gateway):
    root = tmp_path / "ds"
    shutil.copytree(DATASET_DIR, root)
    (root / "NSSK" / "goals.jsonl").write_text("")
    (root / "NSSK" / "properties.jsonl").write_text("")
    ds = load_dataset(root)
    report = run_extraction_eval(ds, replay_gateway, PromptConfig())
    row = {r.protocol: r for r in report.rows}["NSSK"]
    assert row.error is not None
    md = report.to_markdown()
    assert "FAILED" in md


# --- formalization ----------------------------------------------------------------

def test_formalization_eval_identity_runs(mini_dataset, replay_gateway):
    report = run_formalization_eval(mini_dataset, replay_gateway, runs=3)
    assert len(report.rows) == 2
    for row in report.rows:
        assert row.skipped is None
        assert row.recall_mean == 1.0 and row.recall_std == 0.0
        assert row.precision_mean == 1.0 and row.precision_std == 0.0
        assert row.f1_mean == 1.0 and row.f1_std == 0.0
        assert row.acc_slot_mean == 1.0 and row.acc_slot_std == 0.0


def test_formalization_eval_bytes_match_committed_golden(mini_dataset, replay_gateway):
    report = run_formalization_eval(mini_dataset, replay_gateway, runs=3)
    golden = (GOLDEN_DIR / "formalization_report.json").read_bytes()
    assert report.to_json_bytes() == golden


def test_formalization_eval_skips_missing_flow(tmp_path, replay_gateway):
    root = tmp_path / "ds"
    shutil.copytree(DATASET_DIR, root)
    (root / "NSSK" / "flow.json").unlink()
    ds = load_dataset(root)
    report = run_formalization_eval(ds, replay_gateway, runs=1)
    by_name = {r.protocol: r for r in report.rows}
    assert by_name["NSSK"].skipped == "no protocol flow"
    assert by_name["Kao-Chow-v1"].skipped is None
    assert "skipped" in report.to_markdown()
