"""Stage I: per-chunk extraction of security-goal sentences.

Each chunk goes to the model with a fixed instruction scaffold; the model
answers with a JSON array of verbatim sentences (``[]`` when the chunk has
none). Per-chunk outputs are aggregated into a document-level candidate
set, deduplicated on normalized text. This module also builds the
negative-downsampled instruction-tuning dataset used to specialize an
extractor model.
"""

from __future__ import annotations

import json
import logging
import random
import re
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

from .corpus import Chunk
from .errors import ConfigError, DatasetError, GatewayError, MalformedOutputError, ProtocolMismatchError
from .gateway import ChatRequest, Gateway, GenerationParams
from .metrics import normalize_span

if TYPE_CHECKING:
    from .harness.dataset import ProtocolRecord

logger = logging.getLogger(__name__)

SYSTEM_PROMPT = "You are an expert in the formal verification of cryptographic protocols."

_PROMPT_SKELETON = """\
# Core Task

Your task is to extract ALL Security Goal Sentences from the provided protocol specification text.

- Note: A single input text may contain multiple distinct security goals. You must identify and list every sentence that qualifies.

- Output the result strictly as a JSON Array of Strings.

## 1. Definition of a Security Goal

{definition}

## 2. Target Vocabulary

{vocabulary}

## 3. Key Extraction Rules

{key_rules}

## 4. Few-Shot Examples

{examples}

## 5. Output Instructions

Extract the full original sentence verbatim.

STRICT FORMATTING: Output ONLY the raw JSON list.

CRITICAL: Do NOT wrap the output in markdown code blocks (e.g., no json ...).

CRITICAL: The output must start immediately with the character [ and end with ].

Do not add any text, explanations, or whitespace before the first [.

If no goals are found, output [].

## 6. Input Text

{input_text}
"""

DEFAULT_DEFINITION = (
    "A security goal states a protection the protocol is intended to provide (what must hold): "
    "confidentiality of a value, authentication or agreement between parties, freshness, privacy of "
    "an identity, non-repudiation, or resistance to downgrade or key-compromise attacks. Sentences "
    "describing how the protocol works (message formats, algorithms, retransmission, encodings) are "
    "not security goals."
)

DEFAULT_VOCABULARY = (
    "confidentiality, secrecy, forward secrecy, authentication, mutual authentication, agreement, "
    "freshness, replay protection, integrity, anonymity, unlinkability, identity protection, "
    "non-repudiation, downgrade protection, key compromise impersonation"
)

DEFAULT_KEY_RULES = (
    "- Extract only sentences asserting a protection objective; ignore mechanism descriptions.\n"
    "- Modal verbs (MUST, SHALL) alone do not make a sentence a security goal.\n"
    "- Copy each extracted sentence exactly as written in the input text.\n"
    "- Never merge, split, or paraphrase sentences."
)

DEFAULT_EXAMPLES = (
    'Input: "The session key K must remain secret from any attacker. Messages are encoded as TLV records."\n'
    'Output: ["The session key K must remain secret from any attacker."]\n\n'
    'Input: "Implementations SHOULD retransmit after three seconds."\n'
    "Output: []"
)


@dataclass(frozen=True)
class PromptConfig:
    """Content for the extraction prompt slots plus generation settings."""

    definition: str = DEFAULT_DEFINITION
    vocabulary: str = DEFAULT_VOCABULARY
    key_rules: str = DEFAULT_KEY_RULES
    examples: str = DEFAULT_EXAMPLES
    model_tag: str = "extractor"
    temperature: float = 0.0
    max_output_chars: int = 8192

    def validate(self) -> None:
        for slot in ("definition", "vocabulary", "key_rules", "examples"):
            if not getattr(self, slot):
                raise ConfigError(f"prompt config is missing the {slot!r} slot")


def build_extraction_prompt(chunk: Chunk, cfg: PromptConfig) -> ChatRequest:
    """Fill the six-section extraction scaffold with the config slots."""
    cfg.validate()
    if not chunk.text:
        raise ValueError("cannot build a prompt for an empty chunk")
    user_prompt = _PROMPT_SKELETON.format(
        definition=cfg.definition,
        vocabulary=cfg.vocabulary,
        key_rules=cfg.key_rules,
        examples=cfg.examples,
        input_text=chunk.text,
    )
    return ChatRequest(
        system_prompt=SYSTEM_PROMPT,
        user_prompt=user_prompt,
        params=GenerationParams(temperature=cfg.temperature, max_output_chars=cfg.max_output_chars),
        model_tag=cfg.model_tag,
    )


def instruction_text(cfg: PromptConfig) -> str:
    """The prompt scaffold without the input text, for training rows."""
    cfg.validate()
    scaffold = _PROMPT_SKELETON.format(
        definition=cfg.definition,
        vocabulary=cfg.vocabulary,
        key_rules=cfg.key_rules,
        examples=cfg.examples,
        input_text="",
    )
    return scaffold.rstrip("\n")


_FENCE_RE = re.compile(r"^\s*```[a-zA-Z]*\s*\n(.*?)\n?\s*```\s*$", re.DOTALL)


def parse_json_array(raw: str) -> list:
    """Parse a model response into a JSON array, tolerating a code fence."""
    text = raw.strip()
    fence = _FENCE_RE.match(text)
    if fence:
        text = fence.group(1).strip()
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedOutputError(f"response is not valid JSON: {exc}", raw=raw) from exc
    if not isinstance(value, list):
        raise MalformedOutputError("response is not a JSON array", raw=raw)
    return value


def parse_extraction_output(raw: str) -> list[str]:
    """Parse the model's response into a list of sentences.

    Accepts a strict JSON array of strings, optionally wrapped in a code
    fence; anything else raises with the raw text attached so the caller
    can retry once.
    """
    value = parse_json_array(raw)
    for item in value:
        if not isinstance(item, str):
            raise MalformedOutputError("response array contains non-string elements", raw=raw)
    return value


@dataclass(frozen=True)
class GoalCandidate:
    text: str
    doc_id: str
    chunk_index: int
    normalized_text: str
    non_verbatim: bool = False

    def to_json(self) -> dict:
        row = {
            "text": self.text,
            "doc_id": self.doc_id,
            "chunk_index": self.chunk_index,
            "normalized_text": self.normalized_text,
        }
        if self.non_verbatim:
            row["non_verbatim"] = True
        return row

    @classmethod
    def from_json(cls, row: dict) -> "GoalCandidate":
        return cls(
            text=row["text"],
            doc_id=row["doc_id"],
            chunk_index=row["chunk_index"],
            normalized_text=row.get("normalized_text") or normalize_span(row["text"]),
            non_verbatim=row.get("non_verbatim", False),
        )


@dataclass(frozen=True)
class CandidateSet:
    doc_id: str
    candidates: tuple[GoalCandidate, ...] = ()

    def __len__(self) -> int:
        return len(self.candidates)


def extract_chunk(chunk: Chunk, gateway: Gateway, cfg: PromptConfig) -> list[GoalCandidate]:
    """Run one chunk through chat -> parse -> candidates with provenance.

    Malformed output gets exactly one retry; the second failure propagates.
    Sentences the chunk does not contain (after normalization) are kept but
    flagged ``non_verbatim``.
    """
    request = build_extraction_prompt(chunk, cfg)
    try:
        sentences = parse_extraction_output(gateway.chat(request))
    except MalformedOutputError as exc:
        logger.warning("malformed extraction output for chunk %d; retrying once: %s", chunk.index, exc)
        sentences = parse_extraction_output(gateway.chat(request))

    chunk_norm = normalize_span(chunk.text)
    candidates = []
    for sentence in sentences:
        if not sentence.strip():
            logger.warning("dropping empty sentence from chunk %d output", chunk.index)
            continue
        norm = normalize_span(sentence)
        verbatim = bool(norm) and norm in chunk_norm
        if not verbatim:
            logger.warning(
                "chunk %d: extracted sentence not found verbatim in chunk (flagging non_verbatim): %r",
                chunk.index, sentence,
            )
        candidates.append(
            GoalCandidate(
                text=sentence,
                doc_id=chunk.doc_id,
                chunk_index=chunk.index,
                normalized_text=norm,
                non_verbatim=not verbatim,
            )
        )
    return candidates


def aggregate_candidates(
    per_chunk: Sequence[Sequence[GoalCandidate]],
    doc_id: str | None = None,
) -> CandidateSet:
    """Merge per-chunk candidate lists into the document-level set.

    Deduplicates on normalized text keeping the earliest chunk occurrence;
    output order is (chunk_index, position in model output). Idempotent.
    """
    flat = [c for chunk_list in per_chunk for c in chunk_list]
    doc_ids = {c.doc_id for c in flat}
    if len(doc_ids) > 1:
        raise ProtocolMismatchError(f"candidates from multiple documents: {sorted(doc_ids)}")
    if doc_id is None:
        doc_id = next(iter(doc_ids)) if doc_ids else ""
    elif doc_ids and doc_ids != {doc_id}:
        raise ProtocolMismatchError(f"candidates belong to {doc_ids.pop()!r}, expected {doc_id!r}")

    flat.sort(key=lambda c: c.chunk_index)  # stable: preserves output order within a chunk
    seen: set[str] = set()
    unique = []
    for cand in flat:
        if cand.normalized_text in seen:
            continue
        seen.add(cand.normalized_text)
        unique.append(cand)
    return CandidateSet(doc_id=doc_id, candidates=tuple(unique))


def extract_candidates(
    chunks: Sequence[Chunk],
    gateway: Gateway,
    cfg: PromptConfig,
    runs: int = 1,
) -> tuple[CandidateSet, list[int]]:
    """Extract a whole document; failed chunks are recorded, not fatal.

    ``runs`` independent passes are merged by aggregation (useful for
    high-recall candidate generation before human review).
    """
    per_chunk: list[list[GoalCandidate]] = []
    failed: list[int] = []
    for _ in range(max(1, runs)):
        for chunk in chunks:
            try:
                per_chunk.append(extract_chunk(chunk, gateway, cfg))
            except (MalformedOutputError, GatewayError) as exc:
                logger.error("chunk %d extraction failed after retry: %s", chunk.index, exc)
                failed.append(chunk.index)
    doc_id = chunks[0].doc_id if chunks else ""
    return aggregate_candidates(per_chunk, doc_id=doc_id), sorted(set(failed))


# --- instruction-tuning data --------------------------------------------------

POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass(frozen=True)
class InstructionExample:
    input_chunk: str
    target: tuple[str, ...]
    label: str

    def __post_init__(self):
        if self.label not in (POSITIVE, NEGATIVE):
            raise ValueError(f"unknown label {self.label!r}")
        if (self.label == POSITIVE) != bool(self.target):
            raise ValueError("label must be positive iff target is non-empty")
        chunk_norm = normalize_span(self.input_chunk)
        for t in self.target:
            if normalize_span(t) not in chunk_norm:
                raise ValueError(f"target sentence not found in its chunk: {t!r}")


def make_training_examples(
    protocols: Sequence["ProtocolRecord"],
    neg_ratio: int = 3,
    seed: int = 0,
) -> list[InstructionExample]:
    """Build the downsampled instruction-tuning set from annotated chunks.

    All positive chunks are kept; negatives are sampled uniformly without
    replacement at ``neg_ratio`` negatives per positive (or all of them if
    fewer exist). The combined list is shuffled. Fully deterministic for a
    given seed.
    """
    if neg_ratio <= 0:
        raise ValueError("neg_ratio must be positive")
    positives: list[InstructionExample] = []
    negatives: list[InstructionExample] = []
    for record in protocols:
        targets_by_chunk: dict[int, list[str]] = {}
        for entry in record.goal_spans:
            for ci in entry.chunk_indices:
                targets_by_chunk.setdefault(ci, [])
                if entry.span_text not in targets_by_chunk[ci]:
                    targets_by_chunk[ci].append(entry.span_text)
        for chunk in record.chunks:
            targets = targets_by_chunk.get(chunk.index, [])
            if targets:
                positives.append(InstructionExample(chunk.text, tuple(targets), POSITIVE))
            else:
                negatives.append(InstructionExample(chunk.text, (), NEGATIVE))

    if not positives:
        raise DatasetError("training split contains no positive chunks")

    rng = random.Random(seed)
    n_neg = min(neg_ratio * len(positives), len(negatives))
    sampled = rng.sample(negatives, n_neg)
    examples = positives + sampled
    rng.shuffle(examples)
    return examples


def training_rows(examples: Sequence[InstructionExample], cfg: PromptConfig) -> list[dict]:
    """Rows for generic instruction-tuning toolkits.

    The target string is the same JSON-array format the extractor emits at
    inference time, keeping training and inference consistent.
    """
    instruction = instruction_text(cfg)
    return [
        {
            "instruction": instruction,
            "input": ex.input_chunk,
            "output": json.dumps(list(ex.target), ensure_ascii=False),
        }
        for ex in examples
    ]
