"""Evaluation mathematics for both pipeline stages.

Sentence-level extraction scores (precision over extracted sentences,
recall over ground-truth properties, harmonic-mean F1), formalization
scores (intent F1 over (type, role) tuples, best-coverage slot accuracy),
span normalization, and inter-annotator agreement (Jaccard / pairwise
F1 a.k.a. Dice).

All fractions are exact floats; percentages are rounded half-up only at
display time via :func:`fmt_pct`.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .errors import DegenerateMetricError, ProtocolMismatchError

if TYPE_CHECKING:  # structural use only; avoids an import cycle
    from .extraction import CandidateSet
    from .harness.dataset import GroundTruthEntry
    from .schema import CanonicalProperty

# Sentences count as matching when one normalized form contains the other
# or their token sets overlap at least this much.
DEFAULT_MATCH_JACCARD = 0.6

# Subtype-alignment credit: exact (type, subtype) match, type-only match,
# type mismatch.
ALIGNMENT_EXACT = 1.0
ALIGNMENT_TYPE_ONLY = 0.5
ALIGNMENT_MISMATCH = 0.0

# Weights of variable recall vs subtype alignment in the similarity score.
VARIABLE_RECALL_WEIGHT = 0.6
SUBTYPE_ALIGNMENT_WEIGHT = 0.4

_HYPHEN_RE = re.compile("[‐‑‒–—―−­]")
_WS_RE = re.compile(r"\s+")


def normalize_span(text: str) -> str:
    """Canonical form for span comparison.

    In order: Unicode NFC, hyphen variants to ``-``, whitespace runs to a
    single space, lowercase, strip punctuation except hyphens joining two
    alphanumerics, trim.
    """
    s = unicodedata.normalize("NFC", text)
    s = _HYPHEN_RE.sub("-", s)
    s = _WS_RE.sub(" ", s)
    s = s.lower()
    kept = []
    last = len(s) - 1
    for i, ch in enumerate(s):
        if ch == "-":
            if 0 < i < last and s[i - 1].isalnum() and s[i + 1].isalnum():
                kept.append(ch)
        elif ch.isalnum() or ch == " ":
            kept.append(ch)
    return _WS_RE.sub(" ", "".join(kept)).strip()


def token_jaccard(a: str, b: str) -> float:
    """Jaccard overlap of the whitespace token sets of two normalized spans."""
    ta, tb = set(a.split()), set(b.split())
    if not ta and not tb:
        return 0.0
    return len(ta & tb) / len(ta | tb)


def spans_match(norm_a: str, norm_b: str, jaccard_threshold: float = DEFAULT_MATCH_JACCARD) -> bool:
    """Match rule on already-normalized spans: containment or token overlap."""
    if not norm_a or not norm_b:
        return False
    if norm_a in norm_b or norm_b in norm_a:
        return True
    return token_jaccard(norm_a, norm_b) >= jaccard_threshold


# --- sentence-level extraction scoring --------------------------------------

@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn_props: int
    hits: frozenset
    matched_pairs: tuple = ()

    @property
    def degenerate(self) -> bool:
        """True when no sentences were extracted, making precision 0 by fiat."""
        return self.tp + self.fp == 0


def match_sentences(
    extracted: "CandidateSet",
    gt: Sequence["GroundTruthEntry"],
    gt_property_ids: Iterable[str] | None = None,
    doc_id: str | None = None,
    jaccard_threshold: float = DEFAULT_MATCH_JACCARD,
) -> MatchResult:
    """Match extracted candidates against annotated goal spans.

    Each candidate counts as a true positive at most once, however many
    spans it matches; hits are the union of property ids linked to any
    matched span. ``gt_property_ids`` is the protocol's full property-id
    universe (defaults to the ids referenced by the spans) and determines
    the false-negative count.
    """
    if doc_id is not None and extracted.doc_id != doc_id:
        raise ProtocolMismatchError(
            f"candidates belong to {extracted.doc_id!r}, ground truth to {doc_id!r}"
        )
    universe = frozenset(gt_property_ids) if gt_property_ids is not None else frozenset(
        pid for entry in gt for pid in entry.property_ids
    )
    norm_gt = [(entry, normalize_span(entry.span_text)) for entry in gt]

    tp = 0
    hits: set[str] = set()
    pairs: list[tuple] = []
    for cand in extracted.candidates:
        nc = cand.normalized_text
        matched = False
        for entry, ng in norm_gt:
            if spans_match(nc, ng, jaccard_threshold):
                matched = True
                hits.update(entry.property_ids)
                pairs.append((cand, entry))
        if matched:
            tp += 1
    hit_set = frozenset(hits) & universe
    return MatchResult(
        tp=tp,
        fp=len(extracted.candidates) - tp,
        fn_props=len(universe) - len(hit_set),
        hits=hit_set,
        matched_pairs=tuple(pairs),
    )


def extraction_precision(m: MatchResult) -> float:
    """TP / (TP + FP); 0.0 on the degenerate no-extraction case."""
    total = m.tp + m.fp
    return m.tp / total if total else 0.0


def property_recall(hits: Iterable[str], gt_props: Iterable[str]) -> float:
    """Fraction of ground-truth properties covered by matched sentences."""
    gt_set = set(gt_props)
    if not gt_set:
        raise DegenerateMetricError("recall is undefined with no ground-truth properties")
    return len(set(hits) & gt_set) / len(gt_set)


def combined_f1(p: float, r: float) -> float:
    """Harmonic mean of precision and recall; 0.0 when both are 0."""
    if not (0.0 <= p <= 1.0 and 0.0 <= r <= 1.0):
        raise ValueError("p and r must lie in [0, 1]")
    return 2.0 * p * r / (p + r) if p + r else 0.0


# --- formalization scoring ---------------------------------------------------

def _role_tuples(props: Sequence["CanonicalProperty"]) -> dict:
    counts: dict[tuple[str, str], int] = {}
    for p in props:
        for role in p.role_values():
            key = (p.type, role)
            counts[key] = counts.get(key, 0) + 1
    return counts


def intent_f1(gen: Sequence["CanonicalProperty"], gt: Sequence["CanonicalProperty"]) -> float:
    """Micro-averaged F1 over the (type, role) tuple multisets of both sides."""
    gen_counts = _role_tuples(gen)
    gt_counts = _role_tuples(gt)
    total_gen = sum(gen_counts.values())
    total_gt = sum(gt_counts.values())
    if total_gen == 0 and total_gt == 0:
        return 1.0
    if total_gen == 0 or total_gt == 0:
        return 0.0
    tp = sum(min(n, gt_counts.get(key, 0)) for key, n in gen_counts.items())
    return combined_f1(tp / total_gen, tp / total_gt)


@dataclass(frozen=True)
class PropertyScorePair:
    generated: "CanonicalProperty"
    best_gt: "CanonicalProperty | None"
    r_v: float
    a_s: float
    s: float
    degenerate: bool = False


def similarity_score(
    p_i: "CanonicalProperty",
    p_j: "CanonicalProperty",
    subtype_partial: float = ALIGNMENT_TYPE_ONLY,
) -> PropertyScorePair:
    """Directional similarity of generated ``p_i`` against ground truth ``p_j``.

    Variable recall uses the ground truth's variable set as denominator, so
    superset generations are not penalized here. Subtype alignment credits
    1.0 for an exact (type, subtype) match, ``subtype_partial`` for a
    type-only match, 0 otherwise. S = 0.6 * R_v + 0.4 * A_s.
    """
    vars_i = set(p_i.variable_symbols())
    vars_j = set(p_j.variable_symbols())
    degenerate = not vars_j
    if degenerate:
        r_v = 1.0 if not vars_i else 0.0
    else:
        r_v = len(vars_i & vars_j) / len(vars_j)
    if p_i.type == p_j.type:
        a_s = ALIGNMENT_EXACT if p_i.subtype == p_j.subtype else subtype_partial
    else:
        a_s = ALIGNMENT_MISMATCH
    s = VARIABLE_RECALL_WEIGHT * r_v + SUBTYPE_ALIGNMENT_WEIGHT * a_s
    return PropertyScorePair(generated=p_i, best_gt=p_j, r_v=r_v, a_s=a_s, s=s, degenerate=degenerate)


def best_coverage(
    p_i: "CanonicalProperty",
    gt: Sequence["CanonicalProperty"],
    subtype_partial: float = ALIGNMENT_TYPE_ONLY,
) -> PropertyScorePair:
    """Best similarity of one generated property against any ground truth."""
    if not gt:
        raise DegenerateMetricError("best-coverage matching needs a non-empty ground truth")
    return max(
        (similarity_score(p_i, p_j, subtype_partial) for p_j in gt),
        key=lambda pair: pair.s,
    )


def slot_accuracy(
    gen: Sequence["CanonicalProperty"],
    gt: Sequence["CanonicalProperty"],
    subtype_partial: float = ALIGNMENT_TYPE_ONLY,
) -> float:
    """Mean best-coverage similarity over the generated properties."""
    if not gen:
        raise DegenerateMetricError("slot accuracy is undefined with no generated properties")
    if not gt:
        raise DegenerateMetricError("slot accuracy is undefined with no ground-truth properties")
    return sum(best_coverage(p, gt, subtype_partial).s for p in gen) / len(gen)


# --- inter-annotator agreement ----------------------------------------------

@dataclass(frozen=True)
class IaaRow:
    protocol: str
    a1: int
    a2: int
    shared: int
    jaccard: float
    dice: float
    degenerate: bool = False

    @property
    def only_a1(self) -> int:
        return self.a1 - self.shared

    @property
    def only_a2(self) -> int:
        return self.a2 - self.shared


@dataclass(frozen=True)
class IaaReport:
    rows: tuple[IaaRow, ...]
    pooled: IaaRow

    @property
    def a1(self) -> int:
        return self.pooled.a1

    @property
    def a2(self) -> int:
        return self.pooled.a2

    @property
    def shared(self) -> int:
        return self.pooled.shared

    @property
    def jaccard(self) -> float:
        return self.pooled.jaccard

    @property
    def dice(self) -> float:
        return self.pooled.dice


def agreement_from_counts(a1: int, a2: int, shared: int) -> tuple[float, float, bool]:
    """(jaccard, dice, degenerate) from unique/shared span counts."""
    if shared > min(a1, a2):
        raise ValueError("shared spans cannot exceed either annotator's count")
    if a1 + a2 == 0:
        return 0.0, 0.0, True
    union = a1 + a2 - shared
    jaccard = shared / union if union else 1.0
    dice = 2 * shared / (a1 + a2)
    return jaccard, dice, False


def _normalized_set(spans: Iterable[str]) -> set[str]:
    # Dedup within an annotator; spans that normalize away entirely are dropped.
    return {n for n in (normalize_span(s) for s in spans) if n}


def iaa(spans_a: Iterable[str], spans_b: Iterable[str], protocol: str = "all") -> IaaReport:
    """Agreement between two annotators' raw span lists for one pool."""
    row = _iaa_row(protocol, spans_a, spans_b)
    return IaaReport(rows=(row,), pooled=row)


def _iaa_row(protocol: str, spans_a: Iterable[str], spans_b: Iterable[str]) -> IaaRow:
    set_a = _normalized_set(spans_a)
    set_b = _normalized_set(spans_b)
    shared = len(set_a & set_b)
    jaccard, dice, degenerate = agreement_from_counts(len(set_a), len(set_b), shared)
    return IaaRow(
        protocol=protocol,
        a1=len(set_a),
        a2=len(set_b),
        shared=shared,
        jaccard=jaccard,
        dice=dice,
        degenerate=degenerate,
    )


def iaa_by_protocol(pairs: Mapping[str, tuple[Iterable[str], Iterable[str]]]) -> IaaReport:
    """Per-protocol agreement rows plus pooled totals.

    Pooling sums per-protocol counts (spans are protocol-scoped), then
    recomputes Jaccard and Dice from the summed counts.
    """
    rows = tuple(_iaa_row(name, a, b) for name, (a, b) in sorted(pairs.items()))
    a1 = sum(r.a1 for r in rows)
    a2 = sum(r.a2 for r in rows)
    shared = sum(r.shared for r in rows)
    jaccard, dice, degenerate = agreement_from_counts(a1, a2, shared)
    pooled = IaaRow("all", a1, a2, shared, jaccard, dice, degenerate)
    return IaaReport(rows=rows, pooled=pooled)


# --- display ------------------------------------------------------------------

def fmt_pct(fraction: float, decimals: int = 1) -> str:
    """Format a fraction as a percentage, rounded half-up at the last digit."""
    quantum = Decimal(1).scaleb(-decimals) if decimals else Decimal(1)
    return str(Decimal(repr(fraction * 100)).quantize(quantum, rounding=ROUND_HALF_UP))
