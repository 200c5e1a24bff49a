"""Command-line entry point: ingest, extract, make-train, formalize,
evaluate, stats, iaa, serve-review."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import defaultdict
from pathlib import Path

from . import __version__, metrics
from .corpus import Chunk, ChunkConfig, MARKDOWN, PLAIN_TEXT, ingest_document, reduce_noise, segment
from .errors import AifgError
from .extraction import (
    CandidateSet,
    GoalCandidate,
    PromptConfig,
    extract_candidates,
    make_training_examples,
    training_rows,
)
from .formalization import DEFAULT_TOP_K, build_index, formalize_all, load_flow
from .gateway import REPLAY, build_gateway, load_config
from .harness.dataset import dataset_stats, load_dataset, split_documents
from .harness.evaluate import run_extraction_eval, run_formalization_eval
from .schema import default_templates, load_templates

logger = logging.getLogger(__name__)


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="gateway config file (TOML or JSON)")
    parser.add_argument("--transcript", help="transcript file for record/replay")
    parser.add_argument("--mode", choices=("record", "replay", "passthrough"), default=REPLAY)
    parser.add_argument("--seed", type=int, default=0)


def _gateway(args):
    config = load_config(args.config) if args.config else None
    return build_gateway(config, transcript_path=args.transcript, mode=args.mode)


def _read_jsonl(path: str) -> list[dict]:
    rows = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def _write_jsonl(path: str, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def cmd_ingest(args) -> int:
    source = Path(args.in_file)
    fmt = args.format or (MARKDOWN if source.suffix.lower() in (".md", ".markdown") else PLAIN_TEXT)
    doc = ingest_document(source.read_bytes(), fmt, args.protocol)
    if args.drop_noise:
        doc = reduce_noise(doc)
    cfg = ChunkConfig(window_chars=args.window, overlap_chars=args.overlap)
    chunks = segment(doc, cfg)
    _write_jsonl(args.out, (c.to_json() for c in chunks))
    print(f"{args.protocol}: {len(chunks)} chunk(s) over {len(doc.body)} chars -> {args.out}")
    return 0


def cmd_extract(args) -> int:
    gw = _gateway(args)
    cfg = PromptConfig(model_tag=args.model_tag)
    chunks_by_doc: dict[str, list[Chunk]] = defaultdict(list)
    for row in _read_jsonl(args.chunks):
        chunk = Chunk.from_json(row)
        chunks_by_doc[chunk.doc_id].append(chunk)

    out_rows = []
    for doc_id, chunks in chunks_by_doc.items():
        candidates, failed = extract_candidates(chunks, gw, cfg, runs=args.runs)
        if failed:
            print(f"{doc_id}: extraction failed for chunk(s) {failed}", file=sys.stderr)
        out_rows.extend(c.to_json() for c in candidates.candidates)
        print(f"{doc_id}: {len(candidates)} candidate(s) from {len(chunks)} chunk(s)")
    _write_jsonl(args.out, out_rows)
    return 0


def cmd_make_train(args) -> int:
    ds = load_dataset(args.dataset)
    train, _test = split_documents(ds, args.holdout or [])
    examples = make_training_examples(list(train.protocols), neg_ratio=args.neg_ratio, seed=args.seed)
    rows = training_rows(examples, PromptConfig())
    _write_jsonl(args.out, rows)
    positives = sum(1 for e in examples if e.label == "positive")
    print(f"{len(rows)} example(s) ({positives} positive, {len(rows) - positives} negative) -> {args.out}")
    return 0


def cmd_formalize(args) -> int:
    gw = _gateway(args)
    templates = load_templates(args.templates) if args.templates else default_templates()
    flow = load_flow(args.flow)

    chunks_by_doc: dict[str, list[Chunk]] = defaultdict(list)
    for row in _read_jsonl(args.chunks):
        chunk = Chunk.from_json(row)
        chunks_by_doc[chunk.doc_id].append(chunk)
    candidates = [GoalCandidate.from_json(row) for row in _read_jsonl(args.candidates)]
    doc_ids = {c.doc_id for c in candidates}
    if len(doc_ids) != 1:
        print(f"formalize expects candidates from exactly one document, got {sorted(doc_ids)}", file=sys.stderr)
        return 2
    doc_id = doc_ids.pop()
    if doc_id not in chunks_by_doc:
        print(f"no chunks for document {doc_id!r} in {args.chunks}", file=sys.stderr)
        return 2

    index = build_index(chunks_by_doc[doc_id], gw)
    goals = [c.text for c in candidates]
    properties, failed = formalize_all(
        goals, index, flow, templates, gw, k=args.k, model_tag=args.model_tag
    )
    if failed:
        print(f"{len(failed)} goal(s) failed formalization", file=sys.stderr)
    _write_jsonl(args.out, (p.to_json() for p in properties))
    print(f"{doc_id}: {len(properties)} propert(ies) from {len(goals)} goal(s) -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    gw = _gateway(args)
    ds = load_dataset(args.dataset)
    if args.holdout:
        _train, ds = split_documents(ds, args.holdout)
    if args.stage == "formalization":
        report = run_formalization_eval(
            ds, gw, runs=args.runs, k=args.k, model_tag=args.model_tag or "formalizer"
        )
    else:
        report = run_extraction_eval(
            ds, gw, PromptConfig(model_tag=args.model_tag or "extractor"), runs=args.runs
        )
    payload = report.to_json_bytes()
    if args.out:
        Path(args.out).write_bytes(payload)
        print(f"report -> {args.out}")
    else:
        sys.stdout.write(payload.decode("utf-8"))
    if args.md:
        Path(args.md).write_text(report.to_markdown(), encoding="utf-8")
        print(f"table -> {args.md}")
    return 0


def cmd_stats(args) -> int:
    report = dataset_stats(load_dataset(args.dataset))
    if args.out:
        Path(args.out).write_text(
            json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
        print(f"stats -> {args.out}")
    else:
        sys.stdout.write(report.to_markdown())
    return 0


def cmd_iaa(args) -> int:
    spans_a = [l for l in Path(args.a).read_text(encoding="utf-8").splitlines() if l.strip()]
    spans_b = [l for l in Path(args.b).read_text(encoding="utf-8").splitlines() if l.strip()]
    report = metrics.iaa(spans_a, spans_b, protocol=args.protocol)
    row = report.pooled
    print(json.dumps(
        {
            "protocol": row.protocol,
            "a1": row.a1,
            "a2": row.a2,
            "shared": row.shared,
            "jaccard_pct": metrics.fmt_pct(row.jaccard, 2),
            "dice_pct": metrics.fmt_pct(row.dice, 2),
            "degenerate": row.degenerate,
        },
        indent=2,
    ))
    return 0


def cmd_serve_review(args) -> int:
    from .harness.review import serve_review

    ds = load_dataset(args.dataset)
    by_doc: dict[str, list[GoalCandidate]] = defaultdict(list)
    for row in _read_jsonl(args.candidates):
        cand = GoalCandidate.from_json(row)
        by_doc[cand.doc_id].append(cand)
    doc_to_protocol = {p.document.id: p.name for p in ds.protocols}
    candidates = {}
    for doc_id, cands in by_doc.items():
        if doc_id not in doc_to_protocol:
            print(f"ignoring candidates for unknown document {doc_id!r}", file=sys.stderr)
            continue
        candidates[doc_to_protocol[doc_id]] = CandidateSet(doc_id=doc_id, candidates=tuple(cands))
    serve_review(ds, candidates, log_path=args.log, bind_addr=args.bind, ui_dir=args.ui)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aifg", description=__doc__)
    parser.add_argument("--version", action="version", version=f"aifg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="turn a document into chunks.jsonl")
    _common_flags(p)
    p.add_argument("--in", dest="in_file", required=True)
    p.add_argument("--protocol", required=True)
    p.add_argument("--format", choices=(PLAIN_TEXT, MARKDOWN))
    p.add_argument("--drop-noise", action="store_true")
    p.add_argument("--window", type=int, default=2000)
    p.add_argument("--overlap", type=int, default=200)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract", help="run goal extraction over chunks.jsonl")
    _common_flags(p)
    p.add_argument("--chunks", required=True)
    p.add_argument("--model-tag", default="extractor")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("make-train", help="build the instruction-tuning dataset")
    _common_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--holdout", nargs="*", default=[], help="protocols excluded from training")
    p.add_argument("--neg-ratio", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_train)

    p = sub.add_parser("formalize", help="synthesize formal properties for candidates")
    _common_flags(p)
    p.add_argument("--candidates", required=True)
    p.add_argument("--chunks", required=True)
    p.add_argument("--flow", required=True)
    p.add_argument("--templates")
    p.add_argument("--k", type=int, default=DEFAULT_TOP_K)
    p.add_argument("--model-tag", default="formalizer")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_formalize)

    p = sub.add_parser("evaluate", help="run an evaluation over a dataset")
    _common_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--holdout", nargs="*", default=[], help="evaluate only these protocols (test split)")
    p.add_argument("--stage", choices=("extraction", "formalization"), default="extraction")
    p.add_argument("--model-tag", default=None, help="defaults to 'extractor' or 'formalizer' per stage")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--k", type=int, default=DEFAULT_TOP_K)
    p.add_argument("--out")
    p.add_argument("--md")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="dataset statistics (chunks, goal chunks, density)")
    _common_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("iaa", help="agreement between two span files (one span per line)")
    _common_flags(p)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--protocol", default="all")
    p.set_defaults(func=cmd_iaa)

    p = sub.add_parser("serve-review", help="run the annotation review service")
    _common_flags(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--log", required=True, help="append-only decisions log (JSONL)")
    p.add_argument("--bind", default="127.0.0.1:8977")
    p.add_argument("--ui", help="directory of built UI assets to serve at /ui")
    p.set_defaults(func=cmd_serve_review)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except AifgError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
