from __future__ import annotations

import json
from pathlib import Path

import pytest

from aifg.corpus import Chunk, Document, PLAIN_TEXT
from aifg.extraction import PromptConfig
from aifg.gateway import Gateway, REPLAY, Transcript
from aifg.harness.dataset import load_dataset

REPO_ROOT = Path(__file__).resolve().parents[1]
FIXTURES = REPO_ROOT / "fixtures"
DATASET_DIR = FIXTURES / "secgoal-mini"
TRANSCRIPT_PATH = FIXTURES / "transcripts" / "golden.jsonl"
GOLDEN_DIR = FIXTURES / "golden"
TEST_DATA = Path(__file__).parent / "data"


def load_test_data(name: str) -> dict:
    return json.loads((TEST_DATA / name).read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def mini_dataset():
    return load_dataset(DATASET_DIR)


@pytest.fixture()
def replay_gateway() -> Gateway:
    return Gateway(transcript=Transcript.load(TRANSCRIPT_PATH), mode=REPLAY)


@pytest.fixture()
def prompt_config() -> PromptConfig:
    return PromptConfig()


def make_doc(body: str, name: str = "Demo") -> Document:
    return Document(id=name.lower(), protocol_name=name, source_format=PLAIN_TEXT, body=body)


def make_chunk(text: str, index: int = 0, doc_id: str = "demo", start: int = 0) -> Chunk:
    return Chunk(doc_id=doc_id, index=index, start=start, end=start + len(text), text=text)


# One visible pass/fail line per acceptance criterion at the end of the run.
def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = []
    for status in ("passed", "failed", "skipped"):
        for report in terminalreporter.stats.get(status, []):
            if "test_acceptance" in getattr(report, "nodeid", ""):
                name = report.nodeid.split("::")[-1]
                lines.append((name, status.upper()))
    if lines:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, status in sorted(lines):
            terminalreporter.write_line(f"{status:<7} {name}")
