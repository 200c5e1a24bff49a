"""Formal-property taxonomy: templates, validation, canonicalization.

Templates are JSON objects whose ``property`` block names a (type,
subtype) pair and declares the fields an instance must fill; placeholder
text in the template determines each field's kind (role, variable, lists
thereof, or free text). Properties that pass validation can be
canonicalized to an identity key that ignores descriptions and the order
of variable lists, which is what deduplication and exact-match scoring
compare.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .errors import (
    DuplicateTemplateError,
    MissingFieldError,
    PropertyValidationError,
    TemplateError,
    UnknownFieldError,
    UnknownTemplateError,
    WrongKindError,
)

logger = logging.getLogger(__name__)

PROPERTY_TYPES = ("Secrecy", "Authentication", "Privacy", "Special")
FIELD_KINDS = ("role", "variable", "variable_list", "role_list", "text")

# Fields allowed on any property without a template declaration.
_COMMON_OPTIONAL = ("description", "source_goals", "source_goal", "ungrounded")


@dataclass(frozen=True)
class FieldSpec:
    name: str
    kind: str


@dataclass(frozen=True)
class PropertyTemplate:
    """One template object; ``subtype`` may be a choice like ``[a | b]``.

    A choice template matches each of its expanded ``subtypes`` but counts
    as a single entry in the set.
    """

    type: str
    subtype: str
    required_fields: tuple[FieldSpec, ...]
    usage_guide: str = ""

    @property
    def subtypes(self) -> tuple[str, ...]:
        return _parse_subtypes(self.subtype)

    def field_spec(self, name: str) -> FieldSpec | None:
        for fs in self.required_fields:
            if fs.name == name:
                return fs
        return None


def _parse_subtypes(subtype: str) -> tuple[str, ...]:
    s = subtype.strip()
    if s.startswith("[") and s.endswith("]"):
        return tuple(part.strip() for part in s[1:-1].split("|") if part.strip())
    return (s,)


@dataclass(frozen=True)
class TemplateSet:
    templates: tuple[PropertyTemplate, ...]

    def __post_init__(self):
        seen: set[tuple[str, str]] = set()
        for t in self.templates:
            if t.type not in PROPERTY_TYPES:
                raise TemplateError(f"unknown property type {t.type!r}")
            if not t.required_fields:
                raise TemplateError(f"template {t.type}/{t.subtype} declares no fields")
            for st in t.subtypes:
                if (t.type, st) in seen:
                    raise DuplicateTemplateError(f"duplicate template for ({t.type}, {st})")
                seen.add((t.type, st))
        if not self.templates:
            logger.warning("loaded an empty template set; no property can validate against it")

    def __len__(self) -> int:
        return len(self.templates)

    def find(self, type_: str, subtype: str) -> PropertyTemplate | None:
        for t in self.templates:
            if t.type == type_ and subtype in t.subtypes:
                return t
        return None

    def pairs(self) -> list[tuple[str, str]]:
        return [(t.type, st) for t in self.templates for st in t.subtypes]


def _strip_line_comments(text: str) -> str:
    """Drop ``//`` comments outside of string literals, line by line."""
    out_lines = []
    for line in text.split("\n"):
        in_string = False
        escaped = False
        cut = len(line)
        for i, ch in enumerate(line):
            if escaped:
                escaped = False
                continue
            if ch == "\\" and in_string:
                escaped = True
            elif ch == '"':
                in_string = not in_string
            elif ch == "/" and not in_string and line[i:i + 2] == "//":
                cut = i
                break
        out_lines.append(line[:cut])
    return "\n".join(out_lines)


_ROLEISH = re.compile(r"role", re.IGNORECASE)
_VARIABLEISH = re.compile(r"variable|var_", re.IGNORECASE)


def _infer_kind(value) -> str:
    if isinstance(value, list):
        return "role_list" if any(_ROLEISH.search(str(v)) for v in value) else "variable_list"
    s = str(value)
    if _ROLEISH.search(s):
        return "role"
    if _VARIABLEISH.search(s):
        return "variable"
    return "text"


def load_templates(source: str | Path | list) -> TemplateSet:
    """Parse a template file (JSON array, ``//`` comments tolerated).

    Each entry holds a ``property`` object whose placeholder values encode
    the field kinds; an optional ``_kinds`` map overrides the inference.
    """
    if isinstance(source, list):
        entries = source
    else:
        text = Path(source).read_text(encoding="utf-8")
        entries = json.loads(_strip_line_comments(text))
    if not isinstance(entries, list):
        raise TemplateError("template file must contain a JSON array")

    templates = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise TemplateError(f"template #{i} is not an object")
        prop = entry.get("property", entry)
        usage = entry.get("_usage_guide", "")
        kinds_override = entry.get("_kinds", {})
        type_ = prop.get("type")
        subtype = prop.get("subtype")
        if not type_ or not subtype:
            raise TemplateError(f"template #{i} lacks type/subtype")
        specs = []
        for name, value in prop.items():
            if name in ("type", "subtype", "description") or name.startswith("_"):
                continue
            kind = kinds_override.get(name, _infer_kind(value))
            if kind not in FIELD_KINDS:
                raise TemplateError(f"template #{i} field {name!r} has unknown kind {kind!r}")
            specs.append(FieldSpec(name, kind))
        templates.append(PropertyTemplate(type_, subtype, tuple(specs), usage))
    return TemplateSet(tuple(templates))


def default_templates() -> TemplateSet:
    """The built-in taxonomy shipped with the package."""
    with resources.files("aifg.data").joinpath("templates.json").open("r", encoding="utf-8") as f:
        return load_templates(json.load(f))


# --- properties -----------------------------------------------------------------

@dataclass(frozen=True)
class FormalProperty:
    """A schema-validated security property.

    ``fields`` holds (name, kind, value) triples in template order; list
    kinds store tuples. ``source_goals`` accumulates the goal sentences a
    property was synthesized from (plural because deduplication merges).
    """

    type: str
    subtype: str
    fields: tuple[tuple[str, str, object], ...]
    description: str = ""
    source_goals: tuple[str, ...] = ()
    ungrounded: bool = False

    def field_value(self, name: str):
        for fname, _kind, value in self.fields:
            if fname == name:
                return value
        raise KeyError(name)

    def role_values(self) -> list[str]:
        out: list[str] = []
        for _name, kind, value in self.fields:
            if kind == "role":
                out.append(value)
            elif kind == "role_list":
                out.extend(value)
        return out

    def variable_symbols(self) -> list[str]:
        out: list[str] = []
        for _name, kind, value in self.fields:
            if kind == "variable":
                out.append(value)
            elif kind == "variable_list":
                out.extend(value)
        return out

    def to_json(self) -> dict:
        row: dict = {"type": self.type, "subtype": self.subtype}
        for name, kind, value in self.fields:
            row[name] = list(value) if kind in ("variable_list", "role_list") else value
        if self.description:
            row["description"] = self.description
        if self.source_goals:
            row["source_goals"] = list(self.source_goals)
        if self.ungrounded:
            row["ungrounded"] = True
        return row


@dataclass(frozen=True)
class CanonicalProperty(FormalProperty):
    """A property in canonical form: fields name-ordered, variable lists sorted.

    Equal semantic content yields an equal ``canonical_key``; descriptions
    and free-text fields do not participate in the key.
    """

    @property
    def canonical_key(self) -> tuple:
        roles = tuple(
            (name, value) for name, kind, value in self.fields if kind in ("role", "role_list")
        )
        variables = tuple(
            (name, value if kind == "variable_list" else (value,))
            for name, kind, value in self.fields
            if kind in ("variable", "variable_list")
        )
        return (self.type, self.subtype, roles, variables)


def canonicalize(p: FormalProperty) -> CanonicalProperty:
    """Deterministic canonical form; idempotent."""
    new_fields = []
    for name, kind, value in sorted(p.fields, key=lambda f: f[0]):
        if kind == "variable_list":
            value = tuple(sorted(value))
        new_fields.append((name, kind, value))
    return CanonicalProperty(
        type=p.type,
        subtype=p.subtype,
        fields=tuple(new_fields),
        description=p.description,
        source_goals=p.source_goals,
        ungrounded=p.ungrounded,
    )


def _coerce(spec: FieldSpec, value) -> object:
    if spec.kind in ("role", "variable"):
        if not isinstance(value, str) or not value.strip():
            raise WrongKindError(f"field {spec.name!r} must be a non-empty string ({spec.kind})")
        return value.strip()
    if spec.kind in ("role_list", "variable_list"):
        if not isinstance(value, list) or not value:
            raise WrongKindError(f"field {spec.name!r} must be a non-empty array of strings ({spec.kind})")
        items = []
        for v in value:
            if not isinstance(v, str) or not v.strip():
                raise WrongKindError(f"field {spec.name!r} must contain only non-empty strings")
            items.append(v.strip())
        return tuple(items)
    if spec.kind == "text":
        if not isinstance(value, str):
            raise WrongKindError(f"field {spec.name!r} must be a string")
        return value
    raise WrongKindError(f"field {spec.name!r} has unsupported kind {spec.kind!r}")


def validate_property(raw, templates: TemplateSet, strict: bool = True) -> FormalProperty:
    """Validate a raw JSON value against the template set.

    Helper keys beginning with ``_`` are ignored; a single ``property``
    wrapper is unwrapped. In strict mode, fields the template does not
    declare are rejected; in lenient mode they are dropped with a warning.
    """
    if not isinstance(raw, dict):
        raise PropertyValidationError(f"property must be a JSON object, got {type(raw).__name__}")
    obj = {k: v for k, v in raw.items() if not k.startswith("_")}
    if isinstance(obj.get("property"), dict) and set(obj) == {"property"}:
        obj = {k: v for k, v in obj["property"].items() if not k.startswith("_")}

    type_ = obj.pop("type", None)
    subtype = obj.pop("subtype", None)
    if not isinstance(type_, str) or not type_:
        raise MissingFieldError("property lacks a 'type'")
    if not isinstance(subtype, str) or not subtype:
        raise MissingFieldError("property lacks a 'subtype'")
    template = templates.find(type_, subtype)
    if template is None:
        raise UnknownTemplateError(f"no template for ({type_!r}, {subtype!r})")

    description = obj.pop("description", "")
    if not isinstance(description, str):
        raise WrongKindError("'description' must be a string")

    source_goals: tuple[str, ...] = ()
    raw_goals = obj.pop("source_goals", None)
    single_goal = obj.pop("source_goal", None)
    if raw_goals is not None:
        if not isinstance(raw_goals, list) or any(not isinstance(g, str) for g in raw_goals):
            raise WrongKindError("'source_goals' must be an array of strings")
        source_goals = tuple(raw_goals)
    elif isinstance(single_goal, str) and single_goal:
        source_goals = (single_goal,)

    ungrounded = bool(obj.pop("ungrounded", False))

    fields = []
    for spec in template.required_fields:
        if spec.name not in obj:
            raise MissingFieldError(f"property ({type_}, {subtype}) lacks required field {spec.name!r}")
        fields.append((spec.name, spec.kind, _coerce(spec, obj.pop(spec.name))))

    if obj:
        names = ", ".join(sorted(obj))
        if strict:
            raise UnknownFieldError(f"property ({type_}, {subtype}) carries undeclared fields: {names}")
        logger.warning("dropping undeclared fields on (%s, %s): %s", type_, subtype, names)

    return FormalProperty(
        type=type_,
        subtype=subtype,
        fields=tuple(fields),
        description=description,
        source_goals=source_goals,
        ungrounded=ungrounded,
    )


def with_source_goals(p: FormalProperty, goals: tuple[str, ...]) -> FormalProperty:
    return replace(p, source_goals=goals)


def mark_ungrounded(p: FormalProperty) -> FormalProperty:
    return replace(p, ungrounded=True)
