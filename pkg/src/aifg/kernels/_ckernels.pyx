# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled backend for the numeric kernels.

Mirrors ``pykernels.py`` operation for operation; both backends must stay
bit-identical. All accumulation runs in C doubles in index order, matching
the Python fallback's float arithmetic exactly.
"""

from libc.math cimport sqrt
from libc.stdint cimport uint64_t
from libc.stdlib cimport calloc, free

cdef uint64_t FNV_OFFSET = 0xCBF29CE484222325u
cdef uint64_t FNV_PRIME = 0x100000001B3u


def trigram_embed(str text, int dim):
    """Hashed character-trigram counts of ``text``, L2-normalized."""
    if dim <= 0:
        raise ValueError("dim must be positive")
    if not text:
        raise ValueError("cannot embed empty text")
    cdef Py_ssize_t n = len(text)
    cdef long long* counts = <long long*> calloc(dim, sizeof(long long))
    if counts == NULL:
        raise MemoryError()
    cdef uint64_t h
    cdef Py_ssize_t i
    cdef Py_UCS4 ch
    try:
        if n < 3:
            h = FNV_OFFSET
            for i in range(n):
                ch = text[i]
                h = (h ^ <uint64_t> ch) * FNV_PRIME
            counts[h % <uint64_t> dim] += 1
        else:
            for i in range(n - 2):
                h = FNV_OFFSET
                ch = text[i]
                h = (h ^ <uint64_t> ch) * FNV_PRIME
                ch = text[i + 1]
                h = (h ^ <uint64_t> ch) * FNV_PRIME
                ch = text[i + 2]
                h = (h ^ <uint64_t> ch) * FNV_PRIME
                counts[h % <uint64_t> dim] += 1
        norm_sq = 0.0
        for i in range(dim):
            norm_sq += (<double> counts[i]) * (<double> counts[i])
        norm = sqrt(norm_sq)
        out = [0.0] * dim
        for i in range(dim):
            out[i] = (<double> counts[i]) / norm
        return out
    finally:
        free(counts)


def cosine_scores(query, vectors):
    """Cosine similarity of ``query`` against each row of ``vectors``."""
    cdef Py_ssize_t qdim = len(query)
    cdef double* q = <double*> calloc(qdim, sizeof(double))
    if q == NULL:
        raise MemoryError()
    cdef Py_ssize_t i
    cdef double qn_sq = 0.0, qn, dot, vn_sq, v, denom
    try:
        for i in range(qdim):
            q[i] = query[i]
        for i in range(qdim):
            qn_sq += q[i] * q[i]
        qn = sqrt(qn_sq)
        scores = []
        for row in vectors:
            if len(row) != qdim:
                raise ValueError(f"dimension mismatch: query {qdim} vs row {len(row)}")
            dot = 0.0
            vn_sq = 0.0
            for i in range(qdim):
                v = row[i]
                dot += q[i] * v
                vn_sq += v * v
            denom = qn * sqrt(vn_sq)
            scores.append(dot / denom if denom != 0.0 else 0.0)
        return scores
    finally:
        free(q)
