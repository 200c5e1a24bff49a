import math
import random

import pytest

import aifg.kernels as kernels
from aifg.kernels import pykernels


def random_texts(n: int, seed: int = 7) -> list[str]:
    rng = random.Random(seed)
    alphabet = "abcdefghij KLMNOP.?!\né‐中"
    return ["".join(rng.choice(alphabet) for _ in range(rng.randint(1, 120))) for _ in range(n)]


def test_backends_bit_identical_embeddings():
    for text in random_texts(50):
        for dim in (8, 64, 256):
            assert kernels.trigram_embed(text, dim) == pykernels.trigram_embed(text, dim)


def test_backends_bit_identical_scores():
    rng = random.Random(3)
    vectors = [[rng.uniform(-1, 1) for _ in range(32)] for _ in range(20)]
    query = [rng.uniform(-1, 1) for _ in range(32)]
    assert kernels.cosine_scores(query, vectors) == pykernels.cosine_scores(query, vectors)


def test_embedding_is_unit_norm_and_deterministic():
    v1 = kernels.trigram_embed("the key must stay secret", 256)
    v2 = kernels.trigram_embed("the key must stay secret", 256)
    assert v1 == v2
    assert math.isclose(sum(x * x for x in v1), 1.0, rel_tol=1e-12)


def test_short_text_embeds_as_single_gram():
    v = kernels.trigram_embed("ab", 16)
    assert sum(1 for x in v if x != 0.0) == 1
    assert math.isclose(sum(x * x for x in v), 1.0, rel_tol=1e-12)


def test_embed_rejects_bad_input():
    with pytest.raises(ValueError):
        kernels.trigram_embed("", 16)
    with pytest.raises(ValueError):
        kernels.trigram_embed("abc", 0)


def test_cosine_self_similarity_is_maximal():
    a = kernels.trigram_embed("alpha beta gamma", 64)
    b = kernels.trigram_embed("something else entirely", 64)
    scores = kernels.cosine_scores(a, [a, b])
    assert scores[0] > scores[1]
    assert scores[0] == pytest.approx(1.0, abs=1e-12)


def test_cosine_zero_vector_scores_zero():
    a = kernels.trigram_embed("alpha", 8)
    assert kernels.cosine_scores(a, [[0.0] * 8]) == [0.0]


def test_cosine_dimension_mismatch():
    with pytest.raises(ValueError):
        kernels.cosine_scores([1.0, 2.0], [[1.0, 2.0, 3.0]])


def test_backend_selection_reports_a_backend():
    assert kernels.BACKEND in ("c", "python")
