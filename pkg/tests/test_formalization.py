import json
import logging

import pytest

from aifg.errors import FormalizationFailedError, GatewayError
from aifg.formalization import (
    FormalizationContext,
    ProtocolFlow,
    build_formalization_prompt,
    build_index,
    dedup_properties,
    formalize_goal,
    render_flow,
    retrieve,
)
from aifg.gateway import Gateway, HashEmbedder, REPLAY, Transcript, request_hash
from aifg.kernels import pykernels
from aifg.schema import default_templates, validate_property

from conftest import make_chunk

FLOW = ProtocolFlow.from_json(
    {
        "protocol_name": "Demo",
        "roles": ["A", "S", "B"],
        "messages": [
            {"step": 1, "from": "A", "to": "S", "payload": ["A", "B", "Na"]},
            {"step": 2, "from": "S", "to": "B", "payload": ["KAB"]},
            {"step": 3, "from": "B", "to": "A", "payload": ["Nb"]},
        ],
        "variables": {
            "A": {"kind": "identity"},
            "B": {"kind": "identity"},
            "Na": {"kind": "nonce", "description": "nonce of A"},
            "Nb": {"kind": "nonce"},
            "KAB": {"kind": "key"},
        },
    }
)


def make_ctx(goal="The key KAB must stay secret.", retrieved=(), **kw):
    return FormalizationContext(
        goal=goal, retrieved=tuple(retrieved), flow=FLOW, templates=default_templates(), **kw
    )


def scripted_gateway_for(ctx, *responses):
    h = request_hash(build_formalization_prompt(ctx))
    return Gateway(transcript=Transcript([(h, r) for r in responses]), mode=REPLAY)


# --- retrieval index -----------------------------------------------------------

def chunk_fixture(texts):
    chunks = []
    pos = 0
    for i, t in enumerate(texts):
        chunks.append(make_chunk(t, index=i, start=pos))
        pos += len(t)
    return chunks


def test_build_index_preserves_order():
    chunks = chunk_fixture(["first chunk text", "second chunk text", "third chunk text"])
    index = build_index(chunks, Gateway(mode=REPLAY))
    assert [ci for ci, _ in index.entries] == [0, 1, 2]
    assert index.dim == 256


def test_build_index_rejects_empty():
    with pytest.raises(ValueError):
        build_index([], Gateway(mode=REPLAY))


def test_build_index_deterministic():
    chunks = chunk_fixture(["alpha beta", "gamma delta"])
    a = build_index(chunks, Gateway(mode=REPLAY))
    b = build_index(chunks, Gateway(mode=REPLAY))
    assert a.entries == b.entries


def test_retrieve_k_exceeding_size_returns_all():
    chunks = chunk_fixture(["one chunk here", "another chunk there"])
    gw = Gateway(mode=REPLAY)
    index = build_index(chunks, gw)
    assert len(retrieve(index, "anything at all", 5, gw)) == 2


def test_retrieve_exact_text_ranks_first():
    texts = ["the quick brown fox jumps", "keys must remain secret always", "unrelated filler words here"]
    chunks = chunk_fixture(texts)
    gw = Gateway(mode=REPLAY)
    index = build_index(chunks, gw)
    top = retrieve(index, "keys must remain secret always", 1, gw)
    assert top[0].index == 1


def test_retrieve_tie_break_prefers_lower_index():
    chunks = chunk_fixture(["identical text", "identical text", "something different"])
    gw = Gateway(mode=REPLAY)
    index = build_index(chunks, gw)
    top = retrieve(index, "identical text", 2, gw)
    assert [c.index for c in top] == [0, 1]


def test_retrieve_matches_brute_force():
    texts = [f"chunk number {i} about {'keys' if i % 3 else 'nonces'} and protocol runs" for i in range(12)]
    chunks = chunk_fixture(texts)
    gw = Gateway(mode=REPLAY)
    index = build_index(chunks, gw)
    goal = "which chunk talks about nonces"
    [qv] = gw.embed([goal])
    sims = pykernels.cosine_scores(list(qv.values), [list(v.values) for _, v in index.entries])
    expected = [i for i in sorted(range(len(sims)), key=lambda i: (-sims[i], i))]
    for k in (1, 3, 5, len(chunks)):
        got = [c.index for c in retrieve(index, goal, k, gw)]
        assert got == expected[:k]


def test_retrieve_dim_mismatch():
    chunks = chunk_fixture(["abc def", "ghi jkl"])
    index = build_index(chunks, Gateway(mode=REPLAY))
    small = Gateway(embed_provider=HashEmbedder(dim=64), mode=REPLAY)
    with pytest.raises(GatewayError):
        retrieve(index, "query", 1, small)


# --- prompt -------------------------------------------------------------------------

def test_prompt_contains_three_step_headers():
    prompt = build_formalization_prompt(make_ctx()).user_prompt
    for header in ("STEP 1: LOGIC DISCOVERY", "STEP 2: SYNTACTIC GROUNDING", "STEP 3: TEMPLATE INSTANTIATION"):
        assert header in prompt


def test_prompt_renders_flow_lines():
    assert "1. A -> S : A, B, Na" in render_flow(FLOW)
    prompt = build_formalization_prompt(make_ctx()).user_prompt
    assert "1. A -> S : A, B, Na" in prompt


def test_prompt_marks_empty_knowledge_base(caplog):
    with caplog.at_level(logging.WARNING):
        prompt = build_formalization_prompt(make_ctx(retrieved=())).user_prompt
    assert "knowledge_base:\nnone" in prompt


def test_prompt_includes_retrieved_chunks_and_query():
    chunk = make_chunk("Grounding context about KAB.", index=7)
    prompt = build_formalization_prompt(make_ctx(retrieved=(chunk,))).user_prompt
    assert "Grounding context about KAB." in prompt
    assert "The key KAB must stay secret." in prompt


# --- synthesis ------------------------------------------------------------------------

GENERATED = {
    "type": "Authentication",
    "subtype": "non_injective_agreement",
    "asserter": "Alice",
    "subject": "Bob",
    "agreementValues": ["A", "B", "Na", "Nb", "KAB"],
}


def test_formalize_goal_published_shape_object():
    ctx = make_ctx()
    gw = scripted_gateway_for(ctx, json.dumps([GENERATED]))
    [prop] = formalize_goal(ctx, gw)
    assert prop.variable_symbols() == ["A", "B", "Na", "Nb", "KAB"]
    assert prop.source_goals == (ctx.goal,)
    assert not prop.ungrounded


def test_formalize_goal_empty_array():
    ctx = make_ctx()
    assert formalize_goal(ctx, scripted_gateway_for(ctx, "[]")) == []


def test_formalize_goal_drops_invalid_elements(caplog):
    ctx = make_ctx()
    bad = dict(GENERATED, subtype="mutual_auth")
    gw = scripted_gateway_for(ctx, json.dumps([GENERATED, bad]))
    with caplog.at_level(logging.INFO):
        props = formalize_goal(ctx, gw)
    assert len(props) == 1
    assert any("dropping invalid property" in r.message for r in caplog.records)


def test_formalize_goal_flags_ungrounded_symbols():
    ctx = make_ctx()
    alien = dict(GENERATED, agreementValues=["Na", "Zz"])
    [prop] = formalize_goal(ctx, scripted_gateway_for(ctx, json.dumps([alien])))
    assert prop.ungrounded


def test_formalize_goal_fails_after_retry():
    ctx = make_ctx()
    gw = scripted_gateway_for(ctx, "still not json")
    with pytest.raises(FormalizationFailedError):
        formalize_goal(ctx, gw)


def test_formalize_goal_retry_recovers():
    class Scripted:
        def __init__(self, responses):
            self.responses = list(responses)

        def chat(self, request):
            return self.responses.pop(0)

    ctx = make_ctx()
    props = formalize_goal(ctx, Scripted(["oops", json.dumps([GENERATED])]))
    assert len(props) == 1


# --- dedup ------------------------------------------------------------------------------

def validated(obj, source_goal=None):
    p = validate_property(dict(obj), default_templates())
    if source_goal:
        from aifg.schema import with_source_goals

        p = with_source_goals(p, (source_goal,))
    return p


def test_dedup_merges_variable_order_variants():
    a = validated(dict(GENERATED, agreementValues=["Na", "Nb"]), "goal one")
    b = validated(dict(GENERATED, agreementValues=["Nb", "Na"]), "goal two")
    out = dedup_properties([a, b])
    assert len(out) == 1
    assert out[0].source_goals == ("goal one", "goal two")


def test_dedup_empty():
    assert dedup_properties([]) == []


def test_dedup_keeps_distinct_subtypes():
    a = validated(GENERATED)
    b = validated(dict(GENERATED, subtype="injective_agreement"))
    assert len(dedup_properties([a, b])) == 2


def test_dedup_idempotent_and_order_stable():
    props = [
        validated(dict(GENERATED, agreementValues=["Nb", "Na"]), "g1"),
        validated(dict(GENERATED, subtype="injective_agreement"), "g2"),
        validated(dict(GENERATED, agreementValues=["Na", "Nb"]), "g3"),
    ]
    once = dedup_properties(props)
    assert [p.subtype for p in once] == ["non_injective_agreement", "injective_agreement"]
    assert dedup_properties(once) == once
