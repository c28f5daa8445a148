"""Structured difference between two revisions of one item.

Produces the per-section added/removed/changed/current counts the feature
extractor consumes. Keyed sections (labels, descriptions by language;
sitelinks by site) are compared key-wise; statements are compared per
property as multisets of structurally-identical statements; aliases,
badges, qualifiers and references are item-global multiset totals.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

from .entity import EntityRevision, SnakValue, Statement, statement_key
from .errors import DataError, ItemMismatch


class PropertyRegistry:
    """Maps property ids to datatypes (text lines ``P213 external-id``).

    Unregistered properties report datatype "unknown". The diff needs this
    to count changed identifier statements, which cannot be inferred from a
    revision by itself.
    """

    def __init__(self, datatypes: Optional[dict[str, str]] = None):
        self._datatypes = dict(datatypes or {})

    @classmethod
    def from_lines(cls, lines) -> "PropertyRegistry":
        datatypes = {}
        for i, line in enumerate(lines):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise DataError(f"registry line {i + 1}: expected 'Pnn datatype', got {line!r}")
            datatypes[parts[0]] = parts[1]
        return cls(datatypes)

    @classmethod
    def load(cls, path) -> "PropertyRegistry":
        return cls.from_lines(Path(path).read_text(encoding="utf-8").splitlines())

    def datatype(self, pid: str) -> str:
        return self._datatypes.get(pid, "unknown")

    def is_identifier(self, pid: str) -> bool:
        return self.datatype(pid) == "external-id"

    def as_lines(self) -> list[str]:
        return [f"{pid} {dt}" for pid, dt in sorted(self._datatypes.items())]


@dataclass(frozen=True)
class EntityDiff:
    """Per-section change counts between a parent and child revision.

    current_* counts always describe the child revision. added_qids carries
    the multiset of Q-id occurrences gained in statement values, and
    parent_item_refs / parent_urls carry the parent-side totals the
    proportion features use as denominators.
    """

    sitelinks_added: int = 0
    sitelinks_removed: int = 0
    sitelinks_changed: int = 0
    sitelinks_current: int = 0
    labels_added: int = 0
    labels_removed: int = 0
    labels_changed: int = 0
    labels_current: int = 0
    descriptions_added: int = 0
    descriptions_removed: int = 0
    descriptions_changed: int = 0
    descriptions_current: int = 0
    statements_added: int = 0
    statements_removed: int = 0
    statements_changed: int = 0
    statements_current: int = 0
    aliases_added: int = 0
    aliases_removed: int = 0
    aliases_current: int = 0
    badges_added: int = 0
    badges_removed: int = 0
    badges_current: int = 0
    qualifiers_added: int = 0
    qualifiers_removed: int = 0
    qualifiers_current: int = 0
    references_added: int = 0
    references_removed: int = 0
    references_current: int = 0
    identifiers_changed: int = 0
    changed_properties: frozenset[str] = frozenset()
    added_item_refs: int = 0
    removed_item_refs: int = 0
    added_qids: dict[str, int] = field(default_factory=dict)
    added_urls: int = 0
    parent_item_refs: int = 0
    parent_urls: int = 0
    changed_label_languages: frozenset[str] = frozenset()
    is_creation: bool = False

    def __post_init__(self) -> None:
        for name in (
            "sitelinks_added", "sitelinks_removed", "sitelinks_changed", "sitelinks_current",
            "labels_added", "labels_removed", "labels_changed", "labels_current",
            "descriptions_added", "descriptions_removed", "descriptions_changed", "descriptions_current",
            "statements_added", "statements_removed", "statements_changed", "statements_current",
            "aliases_added", "aliases_removed", "aliases_current",
            "badges_added", "badges_removed", "badges_current",
            "qualifiers_added", "qualifiers_removed", "qualifiers_current",
            "references_added", "references_removed", "references_current",
            "identifiers_changed", "added_item_refs", "removed_item_refs", "added_urls",
            "parent_item_refs", "parent_urls",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.is_creation:
            for name in (
                "sitelinks_removed", "labels_removed", "descriptions_removed", "statements_removed",
                "aliases_removed", "badges_removed", "qualifiers_removed", "references_removed",
            ):
                if getattr(self, name):
                    raise ValueError("creation diff cannot remove anything")


def _statement_snaks(stmt: Statement) -> Iterator[SnakValue]:
    yield stmt.value
    for _, snak in stmt.qualifiers:
        yield snak
    for group in stmt.references:
        for _, snak in group:
            yield snak


def _qid_counter(statements) -> Counter:
    refs: Counter = Counter()
    for stmt in statements:
        for snak in _statement_snaks(stmt):
            if snak.kind == "item":
                refs[snak.value] += 1
    return refs


def _url_counter(statements) -> Counter:
    urls: Counter = Counter()
    for stmt in statements:
        for snak in _statement_snaks(stmt):
            if snak.kind == "url":
                urls[snak.value] += 1
    return urls


def _alias_counter(rev: EntityRevision) -> Counter:
    return Counter((lang, v) for lang, values in rev.aliases.items() for v in values)


def _badge_counter(rev: EntityRevision) -> Counter:
    return Counter(b for link in rev.sitelinks.values() for b in link.badges)


def _qualifier_counter(rev: EntityRevision) -> Counter:
    out: Counter = Counter()
    for stmts in rev.statements.values():
        for stmt in stmts:
            for qpid, snak in stmt.qualifiers:
                out[(qpid, snak.kind, snak.value)] += 1
    return out


def _reference_counter(rev: EntityRevision) -> Counter:
    out: Counter = Counter()
    for stmts in rev.statements.values():
        for stmt in stmts:
            for group in stmt.references:
                key = tuple(sorted((p, s.kind, s.value) for p, s in group))
                out[key] += 1
    return out


def _sitelink_value(link) -> tuple:
    return (link.title, tuple(sorted(link.badges)))


def _keyed_deltas(parent: dict, child: dict, value_of=lambda v: v) -> tuple[int, int, int, int]:
    added = sum(1 for k in child if k not in parent)
    removed = sum(1 for k in parent if k not in child)
    changed = sum(1 for k in child if k in parent and value_of(child[k]) != value_of(parent[k]))
    return added, removed, changed, len(child)


def _multiset_deltas(parent: Counter, child: Counter) -> tuple[int, int, int]:
    added = sum((child - parent).values())
    removed = sum((parent - child).values())
    return added, removed, sum(child.values())


_EMPTY_REGISTRY = PropertyRegistry()


def diff(
    parent: Optional[EntityRevision],
    child: EntityRevision,
    registry: PropertyRegistry = _EMPTY_REGISTRY,
) -> EntityDiff:
    """Diff parent against child. A missing parent marks an item creation
    and is treated as an empty revision."""
    is_creation = parent is None
    if parent is None:
        parent = EntityRevision(item_id=child.item_id)
    elif parent.item_id != child.item_id:
        raise ItemMismatch(f"cannot diff {parent.item_id} against {child.item_id}")

    la, lr, lc, lcur = _keyed_deltas(parent.labels, child.labels)
    da, dr, dc, dcur = _keyed_deltas(parent.descriptions, child.descriptions)
    sa, sr, sc, scur = _keyed_deltas(parent.sitelinks, child.sitelinks, _sitelink_value)

    # Statements: per property, structurally identical statements cancel as
    # multisets; min-overlap of the remainder counts as changed, the rest as
    # added or removed.
    st_added = st_removed = st_changed = 0
    ident_changed = 0
    changed_props: set[str] = set()
    child_side: list[Statement] = []   # added statements + child half of changed pairs
    parent_side: list[Statement] = []  # removed statements + parent half of changed pairs
    for pid in set(parent.statements) | set(child.statements):
        p_stmts = parent.statements.get(pid, ())
        c_stmts = child.statements.get(pid, ())
        p_keys = Counter(statement_key(s) for s in p_stmts)
        c_keys = Counter(statement_key(s) for s in c_stmts)
        p_rem = p_keys - c_keys
        c_rem = c_keys - p_keys
        n_p = sum(p_rem.values())
        n_c = sum(c_rem.values())
        if n_p == 0 and n_c == 0:
            continue
        changed_props.add(pid)
        changed = min(n_p, n_c)
        added = n_c - changed
        removed = n_p - changed
        st_added += added
        st_removed += removed
        st_changed += changed
        if registry.is_identifier(pid):
            ident_changed += added + removed + changed
        leftover = Counter(c_rem)
        for stmt in c_stmts:
            key = statement_key(stmt)
            if leftover[key] > 0:
                leftover[key] -= 1
                child_side.append(stmt)
        leftover = Counter(p_rem)
        for stmt in p_stmts:
            key = statement_key(stmt)
            if leftover[key] > 0:
                leftover[key] -= 1
                parent_side.append(stmt)

    child_refs = _qid_counter(child_side)
    parent_refs = _qid_counter(parent_side)
    added_qids = child_refs - parent_refs
    removed_qids = parent_refs - child_refs
    added_urls = sum((_url_counter(child_side) - _url_counter(parent_side)).values())

    aa, ar, acur = _multiset_deltas(_alias_counter(parent), _alias_counter(child))
    ba, br, bcur = _multiset_deltas(_badge_counter(parent), _badge_counter(child))
    qa, qr, qcur = _multiset_deltas(_qualifier_counter(parent), _qualifier_counter(child))
    ra, rr, rcur = _multiset_deltas(_reference_counter(parent), _reference_counter(child))

    changed_langs = frozenset(
        lang
        for lang in set(parent.labels) | set(child.labels)
        if parent.labels.get(lang) != child.labels.get(lang)
    )

    all_parent_stmts = [s for stmts in parent.statements.values() for s in stmts]
    return EntityDiff(
        sitelinks_added=sa, sitelinks_removed=sr, sitelinks_changed=sc, sitelinks_current=scur,
        labels_added=la, labels_removed=lr, labels_changed=lc, labels_current=lcur,
        descriptions_added=da, descriptions_removed=dr, descriptions_changed=dc, descriptions_current=dcur,
        statements_added=st_added, statements_removed=st_removed,
        statements_changed=st_changed, statements_current=child.statement_count(),
        aliases_added=aa, aliases_removed=ar, aliases_current=acur,
        badges_added=ba, badges_removed=br, badges_current=bcur,
        qualifiers_added=qa, qualifiers_removed=qr, qualifiers_current=qcur,
        references_added=ra, references_removed=rr, references_current=rcur,
        identifiers_changed=ident_changed,
        changed_properties=frozenset(changed_props),
        added_item_refs=sum(added_qids.values()),
        removed_item_refs=sum(removed_qids.values()),
        added_qids=dict(added_qids),
        added_urls=added_urls,
        parent_item_refs=sum(_qid_counter(all_parent_stmts).values()),
        parent_urls=sum(_url_counter(all_parent_stmts).values()),
        changed_label_languages=changed_langs,
        is_creation=is_creation,
    )
