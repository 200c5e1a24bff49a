"""Pure-Python reference implementation of the numeric kernels.

The compiled backend in ``_ckernels.pyx`` mirrors this file operation for
operation; any change here must be applied there too, in the same
evaluation order, to keep the two backends bit-identical.
"""

from __future__ import annotations

import math
from typing import Sequence

# FNV-1a, 64-bit, applied to code points rather than bytes.
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def trigram_embed(text: str, dim: int) -> list[float]:
    """Hashed character-trigram counts of ``text``, L2-normalized.

    Texts shorter than three characters hash as a single gram so that no
    non-empty text maps to the zero vector.
    """
    if dim <= 0:
        raise ValueError("dim must be positive")
    if not text:
        raise ValueError("cannot embed empty text")
    counts = [0] * dim
    n = len(text)
    if n < 3:
        h = _FNV_OFFSET
        for ch in text:
            h = ((h ^ ord(ch)) * _FNV_PRIME) & _MASK64
        counts[h % dim] += 1
    else:
        for i in range(n - 2):
            h = _FNV_OFFSET
            h = ((h ^ ord(text[i])) * _FNV_PRIME) & _MASK64
            h = ((h ^ ord(text[i + 1])) * _FNV_PRIME) & _MASK64
            h = ((h ^ ord(text[i + 2])) * _FNV_PRIME) & _MASK64
            counts[h % dim] += 1
    norm_sq = 0.0
    for c in counts:
        norm_sq += float(c) * float(c)
    norm = math.sqrt(norm_sq)
    return [float(c) / norm for c in counts]


def cosine_scores(query: Sequence[float], vectors: Sequence[Sequence[float]]) -> list[float]:
    """Cosine similarity of ``query`` against each row of ``vectors``.

    A zero-norm side yields similarity 0.0. Rows must match the query
    dimension.
    """
    qn_sq = 0.0
    for x in query:
        qn_sq += x * x
    qn = math.sqrt(qn_sq)
    scores = []
    for row in vectors:
        if len(row) != len(query):
            raise ValueError(f"dimension mismatch: query {len(query)} vs row {len(row)}")
        dot = 0.0
        vn_sq = 0.0
        for i in range(len(row)):
            v = row[i]
            dot += query[i] * v
            vn_sq += v * v
        denom = qn * math.sqrt(vn_sq)
        scores.append(dot / denom if denom != 0.0 else 0.0)
    return scores
