"""Stage II: retrieval-grounded synthesis of formal properties.

Each extracted goal becomes a semantic query against a dense index of the
document's chunks; the top-k chunks, the hand-authored protocol flow, and
the template schema are assembled into a three-step prompt whose answer is
a JSON array of property objects. Objects that fail template validation
are dropped (logged); survivors are deduplicated on their canonical key.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .corpus import Chunk
from .errors import (
    DatasetError,
    FormalizationFailedError,
    GatewayError,
    MalformedOutputError,
    PropertyValidationError,
)
from .extraction import parse_json_array
from .gateway import ChatRequest, EmbeddingVector, Gateway, GenerationParams
from .kernels import cosine_scores
from .schema import FormalProperty, TemplateSet, canonicalize, validate_property, with_source_goals, mark_ungrounded

logger = logging.getLogger(__name__)

DEFAULT_TOP_K = 5

VARIABLE_KINDS = ("nonce", "key", "identity", "payload", "timestamp")


# --- retrieval ------------------------------------------------------------------

@dataclass(frozen=True)
class RetrievalIndex:
    doc_id: str
    entries: tuple[tuple[int, EmbeddingVector], ...]
    dim: int
    chunks: tuple[Chunk, ...]

    def __post_init__(self):
        if len(self.entries) != len(self.chunks):
            raise ValueError("index entries and chunks are misaligned")
        if any(vec.dim != self.dim for _, vec in self.entries):
            raise ValueError("index contains vectors of mixed dimensions")


def build_index(chunks: Sequence[Chunk], gateway: Gateway) -> RetrievalIndex:
    """Embed every chunk once; order preserved."""
    if not chunks:
        raise ValueError("cannot build an index over zero chunks")
    try:
        vectors = gateway.embed([c.text for c in chunks])
    except Exception:
        # Re-run one at a time to name the offending chunk.
        for c in chunks:
            try:
                gateway.embed([c.text])
            except Exception as exc:
                raise GatewayError(f"embedding failed for chunk {c.index}: {exc}") from exc
        raise
    return RetrievalIndex(
        doc_id=chunks[0].doc_id,
        entries=tuple((c.index, v) for c, v in zip(chunks, vectors)),
        dim=vectors[0].dim,
        chunks=tuple(chunks),
    )


def retrieve(index: RetrievalIndex, goal: str, k: int, gateway: Gateway) -> list[Chunk]:
    """Top-k chunks by cosine similarity to the goal, ties to lower index.

    Fewer than k chunks in the index returns all of them, still ranked.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    [query] = gateway.embed([goal])
    if query.dim != index.dim:
        raise GatewayError(f"query embedding dim {query.dim} does not match index dim {index.dim}")
    scores = cosine_scores(query.values, [vec.values for _, vec in index.entries])
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], index.entries[i][0]))
    return [index.chunks[i] for i in order[:k]]


# --- protocol flow ------------------------------------------------------------

@dataclass(frozen=True)
class FlowMessage:
    step: int
    sender: str
    receiver: str
    payload: tuple[str, ...]


@dataclass(frozen=True)
class FlowVariable:
    kind: str
    description: str = ""


@dataclass(frozen=True)
class ProtocolFlow:
    protocol_name: str
    roles: tuple[str, ...]
    messages: tuple[FlowMessage, ...]
    variables: dict[str, FlowVariable]

    def validate(self) -> None:
        role_set = set(self.roles)
        for msg in self.messages:
            if msg.sender not in role_set or msg.receiver not in role_set:
                raise DatasetError(f"flow message {msg.step} uses undeclared role(s)")
            for sym in msg.payload:
                if sym not in self.variables:
                    raise DatasetError(f"flow message {msg.step} payload symbol {sym!r} is undeclared")
        for sym, var in self.variables.items():
            if var.kind not in VARIABLE_KINDS:
                raise DatasetError(f"flow variable {sym!r} has unknown kind {var.kind!r}")

    @classmethod
    def from_json(cls, data: dict) -> "ProtocolFlow":
        flow = cls(
            protocol_name=data["protocol_name"],
            roles=tuple(data["roles"]),
            messages=tuple(
                FlowMessage(m["step"], m["from"], m["to"], tuple(m["payload"]))
                for m in data["messages"]
            ),
            variables={
                sym: FlowVariable(v["kind"], v.get("description", ""))
                for sym, v in data["variables"].items()
            },
        )
        flow.validate()
        return flow

    def to_json(self) -> dict:
        return {
            "protocol_name": self.protocol_name,
            "roles": list(self.roles),
            "messages": [
                {"step": m.step, "from": m.sender, "to": m.receiver, "payload": list(m.payload)}
                for m in self.messages
            ],
            "variables": {
                sym: {"kind": v.kind, "description": v.description}
                for sym, v in self.variables.items()
            },
        }


def load_flow(path: str | Path) -> ProtocolFlow:
    return ProtocolFlow.from_json(json.loads(Path(path).read_text(encoding="utf-8")))


def render_flow(flow: ProtocolFlow) -> str:
    lines = [f"Protocol: {flow.protocol_name}", "Roles: " + ", ".join(flow.roles), "Messages:"]
    for m in flow.messages:
        lines.append(f"{m.step}. {m.sender} -> {m.receiver} : " + ", ".join(m.payload))
    lines.append("Variables:")
    for sym, var in flow.variables.items():
        desc = f" - {var.description}" if var.description else ""
        lines.append(f"- {sym} ({var.kind}){desc}")
    return "\n".join(lines)


def render_templates(templates: TemplateSet) -> str:
    """A JSON rendering of the template schema for the prompt."""
    placeholder = {
        "role": "[role name from the flow]",
        "variable": "[variable symbol from the flow]",
        "role_list": ["[role name]", "..."],
        "variable_list": ["[variable symbol]", "..."],
        "text": "[free text]",
    }
    entries = []
    for t in templates.templates:
        prop = {"type": t.type, "subtype": t.subtype}
        for fs in t.required_fields:
            prop[fs.name] = placeholder[fs.kind]
        entry = {"property": prop}
        if t.usage_guide:
            entry["_usage_guide"] = t.usage_guide
        entries.append(entry)
    return json.dumps(entries, indent=2, ensure_ascii=False)


# --- synthesis ------------------------------------------------------------------

@dataclass(frozen=True)
class FormalizationContext:
    goal: str
    retrieved: tuple[Chunk, ...]
    flow: ProtocolFlow
    templates: TemplateSet
    model_tag: str = "formalizer"
    temperature: float = 0.0


FORMALIZATION_SYSTEM_PROMPT = (
    "You are an expert Security Protocol Formalization Assistant.\n"
    "Your task is to translate natural language security goals into strictly formatted "
    "formal specification JSON."
)

_FORMALIZATION_SKELETON = """\
# CRITICAL ROLE:

You are a Universal Protocol Analyzer. You do not know the specific protocol logic beforehand.

You must dynamically bridge the gap between the vague {{query}} and the concrete {{protocol_flow}} by using the provided {{knowledge_base}} as your logic dictionary.

## EXECUTION PIPELINE

Follow these 3 steps strictly for every request:

### STEP 1: LOGIC DISCOVERY
- Input: {{user_query}} + {{knowledge_base}}
- Goal: Identify hidden mechanisms and abstract concepts implied by the user (e.g., "Initiator's Nonce").

### STEP 2: SYNTACTIC GROUNDING
- Input: Step 1 Concepts + {{protocol_flow}}
- Goal: Map concepts to EXACT variable strings in the flow (e.g., "Na").

### STEP 3: TEMPLATE INSTANTIATION
- Input: Mapped Variables + {{formal_template}}
- Action: Fill fields like {{agreementValues}} and {{sharedBetween}}. Remove helper fields.

### CONTEXT DATA

formal_template:
{formal_template}

protocol_flow:
{protocol_flow}

knowledge_base:
{knowledge_base}

query:
{query}

### FINAL OUTPUT REQUIREMENT
Output ONLY a valid JSON Array. Start with [, end with ]. No markdown, no explanations.
"""


def build_formalization_prompt(ctx: FormalizationContext) -> ChatRequest:
    """Fill the three-step synthesis scaffold from the context.

    An empty retrieval set is allowed: the knowledge_base slot then reads
    "none" and a warning is logged.
    """
    if not ctx.goal.strip():
        raise ValueError("formalization needs a non-empty goal")
    if ctx.retrieved:
        kb = "\n\n".join(f"[chunk {c.index}]\n{c.text}" for c in ctx.retrieved)
    else:
        logger.warning("formalizing %r with no retrieved context", ctx.goal)
        kb = "none"
    user_prompt = _FORMALIZATION_SKELETON.format(
        formal_template=render_templates(ctx.templates),
        protocol_flow=render_flow(ctx.flow),
        knowledge_base=kb,
        query=ctx.goal,
    )
    return ChatRequest(
        system_prompt=FORMALIZATION_SYSTEM_PROMPT,
        user_prompt=user_prompt,
        params=GenerationParams(temperature=ctx.temperature),
        model_tag=ctx.model_tag,
    )


def formalize_goal(ctx: FormalizationContext, gateway: Gateway, strict: bool = True) -> list[FormalProperty]:
    """chat -> parse -> per-element validation; invalid elements are dropped.

    Properties whose variable symbols are not all declared in the flow are
    kept but flagged ungrounded. Wholly unparseable output is retried once,
    then the goal is marked formalization-failed.
    """
    request = build_formalization_prompt(ctx)
    try:
        try:
            items = parse_json_array(gateway.chat(request))
        except MalformedOutputError as exc:
            logger.warning("malformed formalization output for %r; retrying once: %s", ctx.goal, exc)
            items = parse_json_array(gateway.chat(request))
    except MalformedOutputError as exc:
        raise FormalizationFailedError(ctx.goal, exc) from exc

    flow_symbols = set(ctx.flow.variables)
    properties = []
    for item in items:
        try:
            prop = validate_property(item, ctx.templates, strict=strict)
        except PropertyValidationError as exc:
            logger.info("dropping invalid property for goal %r: %s", ctx.goal, exc)
            continue
        prop = with_source_goals(prop, (ctx.goal,))
        if any(sym not in flow_symbols for sym in prop.variable_symbols()):
            logger.warning("property (%s, %s) uses symbols outside the flow; flagging ungrounded",
                           prop.type, prop.subtype)
            prop = mark_ungrounded(prop)
        properties.append(prop)
    return properties


def dedup_properties(props: Sequence[FormalProperty]) -> list[FormalProperty]:
    """Merge properties sharing a canonical key; first occurrence wins.

    Merged entries accumulate all source goals; output order is
    first-occurrence order. Idempotent.
    """
    by_key: dict[tuple, FormalProperty] = {}
    order: list[tuple] = []
    for p in props:
        key = canonicalize(p).canonical_key
        if key in by_key:
            kept = by_key[key]
            merged_goals = kept.source_goals + tuple(
                g for g in p.source_goals if g not in kept.source_goals
            )
            by_key[key] = with_source_goals(kept, merged_goals)
        else:
            by_key[key] = p
            order.append(key)
    return [by_key[k] for k in order]


def formalize_all(
    goals: Sequence[str],
    index: RetrievalIndex,
    flow: ProtocolFlow,
    templates: TemplateSet,
    gateway: Gateway,
    k: int = DEFAULT_TOP_K,
    strict: bool = True,
    model_tag: str = "formalizer",
) -> tuple[list[FormalProperty], list[str]]:
    """Formalize every goal and deduplicate; failed goals are recorded."""
    collected: list[FormalProperty] = []
    failed: list[str] = []
    for goal in goals:
        retrieved = tuple(retrieve(index, goal, k, gateway))
        ctx = FormalizationContext(goal=goal, retrieved=retrieved, flow=flow,
                                   templates=templates, model_tag=model_tag)
        try:
            collected.extend(formalize_goal(ctx, gateway, strict=strict))
        except (FormalizationFailedError, GatewayError) as exc:
            logger.error("%s", exc)
            failed.append(goal)
    return dedup_properties(collected), failed
