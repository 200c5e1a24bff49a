"""Document ingestion, noise reduction, and sentence-aligned chunking.

Character offsets into the (noise-reduced) document body are the canonical
coordinate system everywhere downstream; chunks are windows over that body
whose right edges are pushed forward to the end of the sentence they land
in, so no chunk boundary splits a sentence.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .errors import DecodeError, DocumentError, EmptyDocumentError

logger = logging.getLogger(__name__)

PLAIN_TEXT = "plain_text"
MARKDOWN = "markdown"

DEFAULT_DELIMITERS = (". ", ".\n", "? ", "! ", "?\n", "!\n")

# Section titles treated as non-normative noise (case-insensitive).
DEFAULT_NOISE_PATTERNS = (
    r"\breferences\b",
    r"\bbibliography\b",
    r"\btable of contents\b",
    r"\backnowledg",
    r"\bindex\b",
)

_MD_HEADING = re.compile(r"^(#{1,6})\s+(.+?)\s*$")
_NUMBERED_HEADING = re.compile(r"^\d+(?:\.\d+)*\.?\s+\S")


@dataclass(frozen=True)
class Section:
    title: str
    start: int
    end: int


@dataclass(frozen=True)
class Document:
    id: str
    protocol_name: str
    source_format: str
    body: str
    sections: tuple[Section, ...] = ()

    def validate(self) -> None:
        if self.source_format not in (PLAIN_TEXT, MARKDOWN):
            raise DocumentError(f"unknown source format {self.source_format!r}")
        prev_end = 0
        for sec in self.sections:
            if not (0 <= sec.start < sec.end <= len(self.body)):
                raise DocumentError(f"section {sec.title!r} range [{sec.start}, {sec.end}) out of bounds")
            if sec.start < prev_end:
                raise DocumentError(f"section {sec.title!r} overlaps its predecessor")
            prev_end = sec.end


@dataclass(frozen=True)
class Chunk:
    doc_id: str
    index: int
    start: int
    end: int
    text: str
    overlaps_previous: int = 0

    def to_json(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "index": self.index,
            "start": self.start,
            "end": self.end,
            "text": self.text,
            "overlaps_previous": self.overlaps_previous,
        }

    @classmethod
    def from_json(cls, row: dict) -> "Chunk":
        return cls(
            doc_id=row["doc_id"],
            index=row["index"],
            start=row["start"],
            end=row["end"],
            text=row["text"],
            overlaps_previous=row.get("overlaps_previous", 0),
        )


@dataclass(frozen=True)
class ChunkConfig:
    window_chars: int = 2000
    overlap_chars: int = 200
    sentence_delimiters: tuple[str, ...] = DEFAULT_DELIMITERS

    def __post_init__(self):
        if self.window_chars <= 0:
            raise ValueError("window_chars must be positive")
        if not 0 <= self.overlap_chars < self.window_chars:
            raise ValueError("overlap_chars must satisfy 0 <= overlap < window")
        if not self.sentence_delimiters:
            raise ValueError("sentence_delimiters must be non-empty")


def slugify(name: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")
    return slug or "doc"


def ingest_document(raw: bytes, source_format: str, protocol_name: str) -> Document:
    """Decode a raw .txt/.md file into a Document with detected sections.

    Line endings are normalized to LF. Sections come from markdown ``#``
    headings or numbered plain-text headings like ``5.1 Security``; each
    section runs from its heading line to the next heading (or EOF).
    """
    try:
        body = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise DecodeError(f"input is not valid UTF-8: {exc}") from exc
    body = body.replace("\r\n", "\n").replace("\r", "\n")
    if not body.strip():
        raise EmptyDocumentError(f"document for {protocol_name!r} is empty")
    sections = _detect_sections(body, source_format)
    doc = Document(
        id=slugify(protocol_name),
        protocol_name=protocol_name,
        source_format=source_format,
        body=body,
        sections=sections,
    )
    doc.validate()
    return doc


def _detect_sections(body: str, source_format: str) -> tuple[Section, ...]:
    if source_format == MARKDOWN:
        matcher = lambda line: (m.group(2) if (m := _MD_HEADING.match(line)) else None)
    elif source_format == PLAIN_TEXT:
        matcher = lambda line: (line.strip() if _NUMBERED_HEADING.match(line) else None)
    else:
        raise DocumentError(f"unknown source format {source_format!r}")

    headings: list[tuple[int, str]] = []  # (offset of heading line, title)
    offset = 0
    for line in body.split("\n"):
        title = matcher(line)
        if title is not None:
            headings.append((offset, title))
        offset += len(line) + 1

    sections = []
    for i, (start, title) in enumerate(headings):
        end = headings[i + 1][0] if i + 1 < len(headings) else len(body)
        sections.append(Section(title=title, start=start, end=end))
    return tuple(sections)


def reduce_noise(doc: Document, drop_titles: tuple[str, ...] = DEFAULT_NOISE_PATTERNS) -> Document:
    """Drop sections whose titles match any pattern; recompute offsets.

    Removed ranges are logged at INFO. No matching section is a no-op.
    """
    patterns = [re.compile(p, re.IGNORECASE) for p in drop_titles]
    drop = [sec for sec in doc.sections if any(p.search(sec.title) for p in patterns)]
    if not drop:
        return doc

    keep_sections = []
    new_body_parts = []
    cursor = 0
    removed_before = 0  # chars removed before the current cursor
    shift_at: list[tuple[int, int]] = []  # (original offset, cumulative removed)
    for sec in doc.sections:
        if sec in drop:
            logger.info(
                "noise reduction removed section %r [%d, %d) from %s",
                sec.title, sec.start, sec.end, doc.id,
            )
            new_body_parts.append(doc.body[cursor:sec.start])
            cursor = sec.end
            removed_before += sec.end - sec.start
            shift_at.append((sec.end, removed_before))
    new_body_parts.append(doc.body[cursor:])
    new_body = "".join(new_body_parts)

    def shifted(pos: int) -> int:
        shift = 0
        for origin, cumulative in shift_at:
            if pos >= origin:
                shift = cumulative
        return pos - shift

    for sec in doc.sections:
        if sec not in drop:
            keep_sections.append(Section(sec.title, shifted(sec.start), shifted(sec.end)))

    out = Document(
        id=doc.id,
        protocol_name=doc.protocol_name,
        source_format=doc.source_format,
        body=new_body,
        sections=tuple(keep_sections),
    )
    out.validate()
    return out


def _is_boundary(body: str, pos: int, delimiters: tuple[str, ...]) -> bool:
    """True when the text ending at ``pos`` completes a sentence delimiter."""
    if pos == len(body):
        return True
    for d in delimiters:
        if pos >= len(d) and body[pos - len(d):pos] == d:
            return True
    return False


def segment(doc: Document, cfg: ChunkConfig = ChunkConfig()) -> list[Chunk]:
    """Sliding-window chunking with forward sentence-boundary extension.

    Each tentative right edge at ``start + window_chars`` moves forward to
    the first position that completes a sentence delimiter (or EOF). The
    extension is capped at twice the window so delimiter-free text cannot
    stall the scan; hitting the cap hard-cuts mid-sentence with a warning.
    The next window starts ``overlap_chars`` before the previous end.
    """
    body = doc.body
    if not body:
        raise EmptyDocumentError(f"document {doc.id} has an empty body")
    n = len(body)
    delims = cfg.sentence_delimiters

    chunks: list[Chunk] = []
    start = 0
    prev_end = 0
    index = 0
    while True:
        tentative = start + cfg.window_chars
        if tentative >= n:
            end = n
        else:
            cap = min(start + 2 * cfg.window_chars, n)
            end = tentative
            while end < cap and not _is_boundary(body, end, delims):
                end += 1
            if end == cap and end < n and not _is_boundary(body, end, delims):
                logger.warning(
                    "chunk %d of %s hit the 2x window extension cap without a sentence delimiter",
                    index, doc.id,
                )
        overlaps = prev_end - start if index > 0 else 0
        chunks.append(Chunk(doc.id, index, start, end, body[start:end], overlaps))
        if end >= n:
            break
        prev_end = end
        start = end - cfg.overlap_chars
        index += 1
    return chunks


def verify_chunk_geometry(body: str, chunks: list[Chunk]) -> None:
    """Check text/range agreement, coverage of [0, len), and ordering.

    Boundary placement is checked separately (it depends on the delimiter
    set); this part holds for any config and is what the dataset loader
    enforces.
    """
    if not chunks:
        raise DocumentError("empty chunk list")
    if chunks[0].start != 0:
        raise DocumentError("first chunk does not start at offset 0")
    if chunks[-1].end != len(body):
        raise DocumentError("last chunk does not end at end-of-text")
    prev: Chunk | None = None
    for c in chunks:
        if body[c.start:c.end] != c.text:
            raise DocumentError(f"chunk {c.index} text does not match body range [{c.start}, {c.end})")
        if prev is not None:
            if c.start >= prev.end:
                raise DocumentError(f"coverage gap before chunk {c.index}")
            if c.start <= prev.start:
                raise DocumentError(f"chunk {c.index} start does not increase")
            if c.index != prev.index + 1:
                raise DocumentError(f"chunk indices out of order at {c.index}")
            if c.overlaps_previous != prev.end - c.start:
                raise DocumentError(f"chunk {c.index} overlaps_previous is inconsistent")
        prev = c


def verify_chunks(body: str, chunks: list[Chunk], delimiters: tuple[str, ...] = DEFAULT_DELIMITERS) -> None:
    """Full invariant check: geometry plus sentence-delimiter boundaries."""
    verify_chunk_geometry(body, chunks)
    for c in chunks[:-1]:
        if not _is_boundary(body, c.end, delimiters):
            raise DocumentError(f"chunk {c.index} ends mid-sentence at offset {c.end}")


def reassemble(chunks: list[Chunk]) -> str:
    """Concatenate chunks with overlap regions deduplicated."""
    parts = []
    for c in chunks:
        parts.append(c.text[c.overlaps_previous:])
    return "".join(parts)
