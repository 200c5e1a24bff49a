"""Numeric kernels behind the offline embedder and retrieval scoring.

Two interchangeable backends exist: a Cython extension (built at install
time when a C compiler is available) and a pure-Python fallback. Both run
the same arithmetic in the same order, so they produce bit-identical
floats and a replay run never depends on which backend is active.

Set ``AIFG_PURE_PYTHON=1`` to force the fallback (used by the benchmark
and by tests that compare the two backends).
"""

from __future__ import annotations

import os

from . import pykernels

BACKEND = "python"
_impl = pykernels

if not os.environ.get("AIFG_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "c"
    except ImportError:
        pass

trigram_embed = _impl.trigram_embed
cosine_scores = _impl.cosine_scores

__all__ = ["BACKEND", "trigram_embed", "cosine_scores", "pykernels"]
