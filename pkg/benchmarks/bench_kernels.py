#!/usr/bin/env python
"""Benchmark the compiled kernels against the pure-Python fallback.

Times the two hot loops of an offline run: embedding a corpus of chunks
(hashed character trigrams) and scoring retrieval queries against the
resulting matrix. Run from the repo root:

    python benchmarks/bench_kernels.py [--chunks 2000] [--chunk-chars 2000]
"""

from __future__ import annotations

import argparse
import random
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from aifg.kernels import pykernels

try:
    from aifg.kernels import _ckernels
except ImportError:
    _ckernels = None

WORDS = (
    "key nonce session alice bob server secret agreement fresh identity "
    "credential ticket encrypt verify protocol exchange handshake record"
).split()


def corpus(n_chunks: int, chunk_chars: int, seed: int = 1) -> list[str]:
    rng = random.Random(seed)
    chunks = []
    for _ in range(n_chunks):
        words = []
        size = 0
        while size < chunk_chars:
            w = rng.choice(WORDS)
            words.append(w)
            size += len(w) + 1
        chunks.append(" ".join(words))
    return chunks


def bench(label: str, fn) -> float:
    start = time.perf_counter()
    fn()
    elapsed = time.perf_counter() - start
    print(f"  {label:<14} {elapsed * 1000:10.1f} ms")
    return elapsed


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--chunks", type=int, default=2000)
    parser.add_argument("--chunk-chars", type=int, default=2000)
    parser.add_argument("--dim", type=int, default=256)
    parser.add_argument("--queries", type=int, default=50)
    args = parser.parse_args()

    texts = corpus(args.chunks, args.chunk_chars)
    queries = corpus(args.queries, 120, seed=2)
    backends = [("python", pykernels)] + ([("c", _ckernels)] if _ckernels else [])
    if _ckernels is None:
        print("compiled backend not built; benchmarking the fallback only")

    print(f"embed {args.chunks} chunks x ~{args.chunk_chars} chars at dim {args.dim}:")
    embed_times = {}
    matrices = {}
    for name, impl in backends:
        embed_times[name] = bench(name, lambda impl=impl: matrices.__setitem__(
            name, [impl.trigram_embed(t, args.dim) for t in texts]
        ))

    print(f"score {args.queries} queries against the {args.chunks}-vector matrix:")
    score_times = {}
    for name, impl in backends:
        matrix = matrices[name]
        qvecs = [impl.trigram_embed(q, args.dim) for q in queries]
        score_times[name] = bench(
            name, lambda impl=impl, qvecs=qvecs, matrix=matrix: [
                impl.cosine_scores(q, matrix) for q in qvecs
            ]
        )

    if _ckernels is not None:
        sample = texts[: min(50, len(texts))]
        assert all(
            _ckernels.trigram_embed(t, args.dim) == pykernels.trigram_embed(t, args.dim)
            for t in sample
        ), "backends disagree"
        print("backends agree bit-for-bit on a sample; speedups:")
        print(f"  embed   {embed_times['python'] / embed_times['c']:.1f}x")
        print(f"  score   {score_times['python'] / score_times['c']:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
