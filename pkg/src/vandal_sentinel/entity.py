"""Structured entity data model and JSON parsing.

Models the five content sections of a knowledge-base item (labels,
descriptions, aliases, statements, site links) plus the edit metadata the
rest of the pipeline consumes. The JSON shape follows the public Wikibase
entity format: top-level ``id``, ``labels``/``descriptions``
(``{lang: {"language", "value"}}``), ``aliases``
(``{lang: [{"language", "value"}]}``), ``claims``
(``{Pxx: [{"mainsnak", "qualifiers", "references", "rank"}]}``) and
``sitelinks`` (``{site: {"site", "title", "badges"}}``).

All types are immutable after construction and all functions are pure, so
everything here is safe for unrestricted parallel use.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional
from urllib.parse import urlparse

from .errors import MalformedJson, SchemaViolation

ITEM_ID_RE = re.compile(r"^Q[1-9][0-9]*$")
PROPERTY_ID_RE = re.compile(r"^P[1-9][0-9]*$")

RANKS = ("preferred", "normal", "deprecated")

#: Value kinds a statement snak can carry. Unknown upstream datatypes are
#: mapped to "string" with the raw serialized value, so new datatypes never
#: break parsing.
VALUE_KINDS = frozenset(
    {
        "item",
        "string",
        "quantity",
        "time",
        "url",
        "external-id",
        "coordinate",
        "novalue",
        "somevalue",
    }
)


def _is_absolute_url(text: str) -> bool:
    try:
        parts = urlparse(text)
    except ValueError:
        return False
    return bool(parts.scheme) and bool(parts.netloc)


@dataclass(frozen=True)
class SnakValue:
    """A single data value inside a statement, qualifier, or reference.

    ``value`` is the normalized textual payload: the Q-id for ``item``, the
    URL for ``url``, the decimal amount for ``quantity``, the calendar value
    for ``time``, "lat,lon" for ``coordinate`` and empty for
    ``novalue``/``somevalue``.
    """

    kind: str
    value: str = ""

    def __post_init__(self) -> None:
        if self.kind not in VALUE_KINDS:
            raise ValueError(f"unknown snak value kind: {self.kind!r}")
        if self.kind == "item" and not ITEM_ID_RE.match(self.value):
            raise ValueError(f"item snak needs a Q-identifier, got {self.value!r}")
        if self.kind == "url" and not _is_absolute_url(self.value):
            raise ValueError(f"url snak needs an absolute URL, got {self.value!r}")


@dataclass(frozen=True)
class Statement:
    """One property/value pair with optional qualifiers, references, rank."""

    property: str
    value: SnakValue
    qualifiers: tuple[tuple[str, SnakValue], ...] = ()
    references: tuple[tuple[tuple[str, SnakValue], ...], ...] = ()
    rank: str = "normal"

    def __post_init__(self) -> None:
        if not PROPERTY_ID_RE.match(self.property):
            raise ValueError(f"bad property id: {self.property!r}")
        if self.rank not in RANKS:
            raise ValueError(f"bad rank: {self.rank!r}")


@dataclass(frozen=True)
class Sitelink:
    """Link from an item to a page on one client wiki."""

    site: str
    title: str
    badges: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if len(set(self.badges)) != len(self.badges):
            raise ValueError("sitelink badges contain duplicates")


@dataclass(frozen=True)
class UserInfo:
    """Editor identity at the time of an edit.

    Anonymous editors have no registration timestamp and no groups.
    """

    name: str
    is_anonymous: bool = False
    is_bot: bool = False
    groups: frozenset[str] = frozenset()
    registration: Optional[int] = None

    def __post_init__(self) -> None:
        if self.is_anonymous and (self.registration is not None or self.groups):
            raise ValueError("anonymous user cannot have registration or groups")


@dataclass(frozen=True)
class EditMeta:
    """Edit metadata attached to one revision. parent_rev_id 0 = creation."""

    rev_id: int
    parent_rev_id: int
    user: UserInfo
    comment: str
    timestamp: int

    def __post_init__(self) -> None:
        if self.rev_id <= 0:
            raise ValueError("rev_id must be positive")
        if self.parent_rev_id and self.parent_rev_id >= self.rev_id:
            raise ValueError("parent_rev_id must precede rev_id")


@dataclass(frozen=True)
class EntityRevision:
    """Full structured snapshot of an item at one revision."""

    item_id: str
    rev_id: int = 0
    timestamp: int = 0
    labels: dict[str, str] = field(default_factory=dict)
    descriptions: dict[str, str] = field(default_factory=dict)
    aliases: dict[str, tuple[str, ...]] = field(default_factory=dict)
    statements: dict[str, tuple[Statement, ...]] = field(default_factory=dict)
    sitelinks: dict[str, Sitelink] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not ITEM_ID_RE.match(self.item_id):
            raise ValueError(f"bad item id: {self.item_id!r}")
        for pid in self.statements:
            if not PROPERTY_ID_RE.match(pid):
                raise ValueError(f"bad statement property key: {pid!r}")
        for lang, values in self.aliases.items():
            if len(set(values)) != len(values):
                raise ValueError(f"duplicate aliases for language {lang!r}")

    def statement_count(self) -> int:
        return sum(len(v) for v in self.statements.values())


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

def _require(cond: bool, message: str, path: str) -> None:
    if not cond:
        raise SchemaViolation(message, path)


def _as_dict(node: Any, path: str) -> dict:
    _require(isinstance(node, dict), f"expected object, got {type(node).__name__}", path)
    return node


def _as_list(node: Any, path: str) -> list:
    _require(isinstance(node, list), f"expected list, got {type(node).__name__}", path)
    return node


def _as_str(node: Any, path: str) -> str:
    _require(isinstance(node, str), f"expected string, got {type(node).__name__}", path)
    return node


def _raw_string(value: Any) -> str:
    """Stable fallback serialization for unmodeled datavalue payloads."""
    if isinstance(value, str):
        return value
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def _parse_snak(node: Any, path: str) -> tuple[str, SnakValue]:
    snak = _as_dict(node, path)
    prop = _as_str(snak.get("property"), f"{path}.property")
    _require(bool(PROPERTY_ID_RE.match(prop)), f"bad property id {prop!r}", f"{path}.property")
    snaktype = snak.get("snaktype", "value")
    if snaktype == "novalue":
        return prop, SnakValue("novalue")
    if snaktype == "somevalue":
        return prop, SnakValue("somevalue")
    _require(snaktype == "value", f"unknown snaktype {snaktype!r}", f"{path}.snaktype")
    datavalue = _as_dict(snak.get("datavalue"), f"{path}.datavalue")
    dvtype = datavalue.get("type")
    value = datavalue.get("value")
    datatype = snak.get("datatype", "")

    if dvtype == "wikibase-entityid":
        payload = _as_dict(value, f"{path}.datavalue.value")
        qid = payload.get("id")
        if qid is None and "numeric-id" in payload:
            prefix = "Q" if payload.get("entity-type", "item") == "item" else "P"
            qid = f"{prefix}{payload['numeric-id']}"
        qid = _as_str(qid, f"{path}.datavalue.value.id")
        if ITEM_ID_RE.match(qid):
            return prop, SnakValue("item", qid)
        # property-valued and other entity references fall back to string
        return prop, SnakValue("string", qid)
    if dvtype == "string":
        text = _as_str(value, f"{path}.datavalue.value")
        if datatype == "url" and _is_absolute_url(text):
            return prop, SnakValue("url", text)
        if datatype == "external-id":
            return prop, SnakValue("external-id", text)
        return prop, SnakValue("string", text)
    if dvtype == "quantity":
        payload = _as_dict(value, f"{path}.datavalue.value")
        amount = _as_str(payload.get("amount"), f"{path}.datavalue.value.amount")
        return prop, SnakValue("quantity", amount)
    if dvtype == "time":
        payload = _as_dict(value, f"{path}.datavalue.value")
        time_text = _as_str(payload.get("time"), f"{path}.datavalue.value.time")
        return prop, SnakValue("time", time_text)
    if dvtype == "globecoordinate":
        payload = _as_dict(value, f"{path}.datavalue.value")
        try:
            lat = float(payload.get("latitude"))  # type: ignore[arg-type]
            lon = float(payload.get("longitude"))  # type: ignore[arg-type]
        except (TypeError, ValueError):
            raise SchemaViolation("bad coordinate payload", f"{path}.datavalue.value")
        return prop, SnakValue("coordinate", f"{lat!r},{lon!r}")
    # unknown datavalue types: keep the raw payload as an opaque string
    return prop, SnakValue("string", _raw_string(value))


def _parse_statement(node: Any, map_key: str, path: str) -> Statement:
    claim = _as_dict(node, path)
    mainsnak = claim.get("mainsnak")
    _require(mainsnak is not None, "claim without mainsnak", path)
    prop, value = _parse_snak(mainsnak, f"{path}.mainsnak")
    _require(prop == map_key, f"mainsnak property {prop!r} != claims key {map_key!r}", f"{path}.mainsnak.property")

    qualifiers: list[tuple[str, SnakValue]] = []
    if "qualifiers" in claim and claim["qualifiers"] is not None:
        qmap = _as_dict(claim["qualifiers"], f"{path}.qualifiers")
        for qpid in qmap:
            for i, qsnak in enumerate(_as_list(qmap[qpid], f"{path}.qualifiers.{qpid}")):
                qualifiers.append(_parse_snak(qsnak, f"{path}.qualifiers.{qpid}[{i}]"))

    references: list[tuple[tuple[str, SnakValue], ...]] = []
    if "references" in claim and claim["references"] is not None:
        for i, ref in enumerate(_as_list(claim["references"], f"{path}.references")):
            refdict = _as_dict(ref, f"{path}.references[{i}]")
            snaks = _as_dict(refdict.get("snaks", {}), f"{path}.references[{i}].snaks")
            group: list[tuple[str, SnakValue]] = []
            for rpid in snaks:
                for j, rsnak in enumerate(_as_list(snaks[rpid], f"{path}.references[{i}].snaks.{rpid}")):
                    group.append(_parse_snak(rsnak, f"{path}.references[{i}].snaks.{rpid}[{j}]"))
            references.append(tuple(group))

    rank = claim.get("rank", "normal")
    _require(rank in RANKS, f"bad rank {rank!r}", f"{path}.rank")
    return Statement(
        property=map_key,
        value=value,
        qualifiers=tuple(qualifiers),
        references=tuple(references),
        rank=rank,
    )


def _dedupe(values: Iterable[str]) -> tuple[str, ...]:
    seen: dict[str, None] = {}
    for v in values:
        seen.setdefault(v, None)
    return tuple(seen)


def parse_entity(json_text: str, rev_id: int = 0, timestamp: int = 0) -> EntityRevision:
    """Parse public entity JSON into an EntityRevision.

    Unknown top-level keys are ignored; missing sections yield empty maps.
    Raises MalformedJson when the text is not JSON at all and
    SchemaViolation (with a node path) when the shape is wrong.
    """
    try:
        root = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise MalformedJson(str(exc)) from exc
    root = _as_dict(root, "$")
    item_id = _as_str(root.get("id"), "id")
    _require(bool(ITEM_ID_RE.match(item_id)), f"bad item id {item_id!r}", "id")

    labels: dict[str, str] = {}
    for lang, node in _as_dict(root.get("labels", {}), "labels").items():
        labels[lang] = _as_str(_as_dict(node, f"labels.{lang}").get("value"), f"labels.{lang}.value")

    descriptions: dict[str, str] = {}
    for lang, node in _as_dict(root.get("descriptions", {}), "descriptions").items():
        descriptions[lang] = _as_str(
            _as_dict(node, f"descriptions.{lang}").get("value"), f"descriptions.{lang}.value"
        )

    aliases: dict[str, tuple[str, ...]] = {}
    for lang, nodes in _as_dict(root.get("aliases", {}), "aliases").items():
        values = []
        for i, node in enumerate(_as_list(nodes, f"aliases.{lang}")):
            values.append(_as_str(_as_dict(node, f"aliases.{lang}[{i}]").get("value"), f"aliases.{lang}[{i}].value"))
        deduped = _dedupe(values)
        if deduped:
            aliases[lang] = deduped

    statements: dict[str, tuple[Statement, ...]] = {}
    for pid, nodes in _as_dict(root.get("claims", {}), "claims").items():
        _require(bool(PROPERTY_ID_RE.match(pid)), f"bad property key {pid!r}", f"claims.{pid}")
        claim_list = _as_list(nodes, f"claims.{pid}")
        parsed = tuple(
            _parse_statement(node, pid, f"claims.{pid}[{i}]") for i, node in enumerate(claim_list)
        )
        if parsed:
            statements[pid] = parsed

    sitelinks: dict[str, Sitelink] = {}
    for site, node in _as_dict(root.get("sitelinks", {}), "sitelinks").items():
        link = _as_dict(node, f"sitelinks.{site}")
        title = _as_str(link.get("title"), f"sitelinks.{site}.title")
        badges = _dedupe(
            _as_str(b, f"sitelinks.{site}.badges[{i}]")
            for i, b in enumerate(_as_list(link.get("badges", []), f"sitelinks.{site}.badges"))
        )
        sitelinks[site] = Sitelink(site=site, title=title, badges=badges)

    return EntityRevision(
        item_id=item_id,
        rev_id=rev_id,
        timestamp=timestamp,
        labels=labels,
        descriptions=descriptions,
        aliases=aliases,
        statements=statements,
        sitelinks=sitelinks,
    )


# ---------------------------------------------------------------------------
# Serialization (round-trips through parse_entity on the modeled subset)
# ---------------------------------------------------------------------------

_DATATYPE_FOR_KIND = {
    "item": "wikibase-item",
    "string": "string",
    "quantity": "quantity",
    "time": "time",
    "url": "url",
    "external-id": "external-id",
    "coordinate": "globe-coordinate",
}


def _snak_to_json(prop: str, snak: SnakValue) -> dict:
    if snak.kind in ("novalue", "somevalue"):
        return {"snaktype": snak.kind, "property": prop}
    out: dict[str, Any] = {
        "snaktype": "value",
        "property": prop,
        "datatype": _DATATYPE_FOR_KIND[snak.kind],
    }
    if snak.kind == "item":
        out["datavalue"] = {"type": "wikibase-entityid", "value": {"entity-type": "item", "id": snak.value}}
    elif snak.kind == "quantity":
        out["datavalue"] = {"type": "quantity", "value": {"amount": snak.value, "unit": "1"}}
    elif snak.kind == "time":
        out["datavalue"] = {"type": "time", "value": {"time": snak.value, "precision": 11}}
    elif snak.kind == "coordinate":
        lat, lon = snak.value.split(",", 1)
        out["datavalue"] = {"type": "globecoordinate", "value": {"latitude": float(lat), "longitude": float(lon)}}
    else:
        out["datavalue"] = {"type": "string", "value": snak.value}
    return out


def _statement_to_json(stmt: Statement) -> dict:
    out: dict[str, Any] = {"mainsnak": _snak_to_json(stmt.property, stmt.value), "rank": stmt.rank}
    if stmt.qualifiers:
        qmap: dict[str, list] = {}
        for qpid, qsnak in stmt.qualifiers:
            qmap.setdefault(qpid, []).append(_snak_to_json(qpid, qsnak))
        out["qualifiers"] = qmap
    if stmt.references:
        refs = []
        for group in stmt.references:
            snaks: dict[str, list] = {}
            for rpid, rsnak in group:
                snaks.setdefault(rpid, []).append(_snak_to_json(rpid, rsnak))
            refs.append({"snaks": snaks})
        out["references"] = refs
    return out


def entity_to_json_dict(rev: EntityRevision) -> dict:
    return {
        "id": rev.item_id,
        "labels": {lang: {"language": lang, "value": v} for lang, v in rev.labels.items()},
        "descriptions": {lang: {"language": lang, "value": v} for lang, v in rev.descriptions.items()},
        "aliases": {
            lang: [{"language": lang, "value": v} for v in values] for lang, values in rev.aliases.items()
        },
        "claims": {pid: [_statement_to_json(s) for s in stmts] for pid, stmts in rev.statements.items()},
        "sitelinks": {
            site: {"site": site, "title": link.title, "badges": list(link.badges)}
            for site, link in rev.sitelinks.items()
        },
    }


def serialize_entity(rev: EntityRevision) -> str:
    """Emit public-shape entity JSON. parse_entity(serialize_entity(r)) == r."""
    return json.dumps(entity_to_json_dict(rev), sort_keys=True, ensure_ascii=False)


# ---------------------------------------------------------------------------
# Canonical content hashing
# ---------------------------------------------------------------------------

def snak_canonical(snak: SnakValue) -> list:
    return [snak.kind, snak.value]


def statement_canonical(stmt: Statement) -> dict:
    """Order-free structural form: qualifier/reference order never matters."""
    return {
        "property": stmt.property,
        "value": snak_canonical(stmt.value),
        "qualifiers": sorted([q, snak_canonical(s)] for q, s in stmt.qualifiers),
        "references": sorted(sorted([p, snak_canonical(s)] for p, s in group) for group in stmt.references),
        "rank": stmt.rank,
    }


def statement_key(stmt: Statement) -> str:
    """Canonical serialization bytes; total order and structural identity."""
    return json.dumps(statement_canonical(stmt), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def canonical_content(rev: EntityRevision) -> dict:
    """Content sections only, all maps key-sorted and all lists in a fixed
    total order. rev_id and timestamp never contribute."""
    return {
        "labels": dict(sorted(rev.labels.items())),
        "descriptions": dict(sorted(rev.descriptions.items())),
        "aliases": {lang: sorted(values) for lang, values in sorted(rev.aliases.items())},
        "statements": {pid: sorted(statement_key(s) for s in stmts) for pid, stmts in sorted(rev.statements.items())},
        "sitelinks": {
            site: {"title": link.title, "badges": sorted(link.badges)}
            for site, link in sorted(rev.sitelinks.items())
        },
    }


def canonical_hash(rev: EntityRevision) -> str:
    """160-bit content digest (hex). Equal content => equal digest."""
    payload = json.dumps(canonical_content(rev), sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha1(payload.encode("utf-8")).hexdigest()
