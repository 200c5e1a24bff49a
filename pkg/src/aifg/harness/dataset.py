"""Dataset model: on-disk layout, loading with eager validation, splits, stats.

Layout: a dataset directory holds one subdirectory per protocol, each with
``document.txt`` (the noise-reduced body), ``chunks.jsonl``, ``goals.jsonl``
(annotated spans with many-to-many property links), ``properties.jsonl``
(rows of ``{"id": ..., <property fields>}``), and an optional ``flow.json``.
An optional top-level ``dataset.json`` carries the version string.

Every cross-reference is checked at load time: dangling property ids,
spans not findable in their listed chunks, chunk/offset disagreements, and
duplicate protocols are all named errors pointing at file and line.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from ..corpus import Chunk, Document, PLAIN_TEXT, ingest_document, verify_chunk_geometry
from ..errors import DatasetError
from ..formalization import ProtocolFlow
from ..metrics import fmt_pct, normalize_span
from ..schema import FormalProperty, TemplateSet, default_templates, validate_property

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroundTruthEntry:
    span_text: str
    chunk_indices: tuple[int, ...]
    property_ids: tuple[str, ...]

    def to_json(self) -> dict:
        return {
            "span_text": self.span_text,
            "chunk_indices": list(self.chunk_indices),
            "property_ids": list(self.property_ids),
        }

    @classmethod
    def from_json(cls, row: dict) -> "GroundTruthEntry":
        return cls(
            span_text=row["span_text"],
            chunk_indices=tuple(row.get("chunk_indices", [])),
            property_ids=tuple(row.get("property_ids", [])),
        )


@dataclass(frozen=True)
class PropertyEntry:
    id: str
    property: FormalProperty


@dataclass(frozen=True)
class ProtocolRecord:
    name: str
    document: Document
    chunks: tuple[Chunk, ...]
    goal_spans: tuple[GroundTruthEntry, ...]
    properties: tuple[PropertyEntry, ...]
    flow: ProtocolFlow | None = None

    @property
    def property_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.properties)

    @property
    def goal_chunk_indices(self) -> frozenset[int]:
        return frozenset(ci for entry in self.goal_spans for ci in entry.chunk_indices)

    @property
    def density(self) -> float:
        return len(self.goal_chunk_indices) / len(self.chunks) if self.chunks else 0.0


@dataclass(frozen=True)
class SecGoalDataset:
    protocols: tuple[ProtocolRecord, ...]
    version: str = "unversioned"

    def __post_init__(self):
        names = [p.name for p in self.protocols]
        if len(names) != len(set(names)):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise DatasetError(f"duplicate protocol name(s): {', '.join(dupes)}")

    def __len__(self) -> int:
        return len(self.protocols)

    def names(self) -> list[str]:
        return [p.name for p in self.protocols]

    def get(self, name: str) -> ProtocolRecord:
        for p in self.protocols:
            if p.name == name:
                return p
        raise DatasetError(f"unknown protocol {name!r}")


def _read_jsonl(path: Path) -> list[tuple[int, dict]]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append((line_no, json.loads(line)))
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON: {exc}", path=str(path), line=line_no) from exc
    return rows


def load_protocol_dir(path: Path, templates: TemplateSet) -> ProtocolRecord:
    name = path.name
    doc_path = path / "document.txt"
    if not doc_path.exists():
        raise DatasetError("missing document.txt", path=str(doc_path))
    document = ingest_document(doc_path.read_bytes(), PLAIN_TEXT, name)

    chunks_path = path / "chunks.jsonl"
    if not chunks_path.exists():
        raise DatasetError("missing chunks.jsonl", path=str(chunks_path))
    chunks = []
    for line_no, row in _read_jsonl(chunks_path):
        try:
            chunks.append(Chunk.from_json(row))
        except KeyError as exc:
            raise DatasetError(f"chunk row missing field {exc}", path=str(chunks_path), line=line_no) from exc
    try:
        verify_chunk_geometry(document.body, chunks)
    except Exception as exc:
        raise DatasetError(f"chunk geometry invalid: {exc}", path=str(chunks_path)) from exc

    properties: list[PropertyEntry] = []
    seen_ids: set[str] = set()
    props_path = path / "properties.jsonl"
    if props_path.exists():
        for line_no, row in _read_jsonl(props_path):
            pid = row.pop("id", None)
            if not pid:
                raise DatasetError("property row lacks an 'id'", path=str(props_path), line=line_no)
            if pid in seen_ids:
                raise DatasetError(f"duplicate property id {pid!r}", path=str(props_path), line=line_no)
            seen_ids.add(pid)
            try:
                prop = validate_property(row, templates)
            except Exception as exc:
                raise DatasetError(f"property {pid!r} invalid: {exc}", path=str(props_path), line=line_no) from exc
            properties.append(PropertyEntry(pid, prop))

    norm_chunks = {c.index: normalize_span(c.text) for c in chunks}
    goal_spans: list[GroundTruthEntry] = []
    goals_path = path / "goals.jsonl"
    if goals_path.exists():
        for line_no, row in _read_jsonl(goals_path):
            entry = GroundTruthEntry.from_json(row)
            if not entry.property_ids:
                raise DatasetError("goal span links no property ids", path=str(goals_path), line=line_no)
            for pid in entry.property_ids:
                if pid not in seen_ids:
                    raise DatasetError(f"dangling property id {pid!r}", path=str(goals_path), line=line_no)
            if not entry.chunk_indices:
                raise DatasetError("goal span lists no chunks", path=str(goals_path), line=line_no)
            norm_span = normalize_span(entry.span_text)
            for ci in entry.chunk_indices:
                if ci not in norm_chunks:
                    raise DatasetError(f"goal span lists unknown chunk {ci}", path=str(goals_path), line=line_no)
                if not norm_span or norm_span not in norm_chunks[ci]:
                    raise DatasetError(
                        f"span not found in chunk {ci}: {entry.span_text!r}",
                        path=str(goals_path), line=line_no,
                    )
            goal_spans.append(entry)

    flow = None
    flow_path = path / "flow.json"
    if flow_path.exists():
        try:
            flow = ProtocolFlow.from_json(json.loads(flow_path.read_text(encoding="utf-8")))
        except DatasetError:
            raise
        except Exception as exc:
            raise DatasetError(f"invalid flow: {exc}", path=str(flow_path)) from exc
        if flow.protocol_name != name:
            raise DatasetError(
                f"flow names protocol {flow.protocol_name!r}, directory is {name!r}",
                path=str(flow_path),
            )

    return ProtocolRecord(
        name=name,
        document=document,
        chunks=tuple(chunks),
        goal_spans=tuple(goal_spans),
        properties=tuple(properties),
        flow=flow,
    )


def load_dataset(path: str | Path, templates: TemplateSet | None = None) -> SecGoalDataset:
    """Load and fully cross-validate a dataset directory."""
    root = Path(path)
    if not root.is_dir():
        raise DatasetError(f"not a dataset directory: {root}")
    templates = templates or default_templates()

    version = "unversioned"
    meta_path = root / "dataset.json"
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        version = str(meta.get("version", version))

    records = []
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        if not (sub / "document.txt").exists():
            logger.debug("skipping %s (no document.txt)", sub)
            continue
        records.append(load_protocol_dir(sub, templates))
    return SecGoalDataset(protocols=tuple(records), version=version)


def split_documents(ds: SecGoalDataset, holdout: Sequence[str]) -> tuple[SecGoalDataset, SecGoalDataset]:
    """Partition by whole protocol; the holdout names become the test set."""
    known = set(ds.names())
    unknown = [n for n in holdout if n not in known]
    if unknown:
        raise DatasetError(f"unknown protocol name(s) in holdout: {', '.join(unknown)}")
    holdout_set = set(holdout)
    train = tuple(p for p in ds.protocols if p.name not in holdout_set)
    test = tuple(p for p in ds.protocols if p.name in holdout_set)
    train_ds = SecGoalDataset(train, ds.version)
    test_ds = SecGoalDataset(test, ds.version)
    leaked = set(train_ds.names()) & set(test_ds.names())
    if leaked:
        raise DatasetError(f"document-level split leaked protocols: {sorted(leaked)}")
    return train_ds, test_ds


# --- statistics ------------------------------------------------------------------

@dataclass(frozen=True)
class StatsRow:
    protocol: str
    chunks: int
    goal_chunks: int

    @property
    def density(self) -> float:
        return self.goal_chunks / self.chunks if self.chunks else 0.0


@dataclass(frozen=True)
class StatsReport:
    rows: tuple[StatsRow, ...]

    @property
    def total_chunks(self) -> int:
        return sum(r.chunks for r in self.rows)

    @property
    def total_goal_chunks(self) -> int:
        return sum(r.goal_chunks for r in self.rows)

    @property
    def pooled_density(self) -> float:
        return self.total_goal_chunks / self.total_chunks if self.total_chunks else 0.0

    def to_json(self) -> dict:
        return {
            "rows": [
                {
                    "protocol": r.protocol,
                    "chunks": r.chunks,
                    "goal_chunks": r.goal_chunks,
                    "density": r.density,
                    "density_pct": fmt_pct(r.density),
                }
                for r in self.rows
            ],
            "total": {
                "chunks": self.total_chunks,
                "goal_chunks": self.total_goal_chunks,
                "density": self.pooled_density,
                "density_pct": fmt_pct(self.pooled_density),
            },
        }

    def to_markdown(self) -> str:
        lines = [
            "| Protocol | Chunks | Goals | Density |",
            "|---|---:|---:|---:|",
        ]
        for r in self.rows:
            lines.append(f"| {r.protocol} | {r.chunks} | {r.goal_chunks} | {fmt_pct(r.density)}% |")
        lines.append(
            f"| **Total** | **{self.total_chunks}** | **{self.total_goal_chunks}** |"
            f" **{fmt_pct(self.pooled_density)}%** |"
        )
        return "\n".join(lines) + "\n"


def stats_from_counts(rows: Iterable[tuple[str, int, int]]) -> StatsReport:
    """Stats from raw (protocol, chunks, goal_chunks) counts."""
    return StatsReport(tuple(StatsRow(name, chunks, goals) for name, chunks, goals in rows))


def dataset_stats(ds: SecGoalDataset) -> StatsReport:
    """Per-protocol goal-chunk density plus pooled totals."""
    return stats_from_counts(
        (p.name, len(p.chunks), len(p.goal_chunk_indices)) for p in ds.protocols
    )
