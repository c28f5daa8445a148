"""Corpus construction: revert detection, trust filtering, labeling, splits.

A corpus is a JSONL file: one header line carrying format and feature schema
versions, then one record per line, sorted by rev_id. Labels follow the
proxy rule: an edit is vandalism when it was identity-reverted, its author
held no trusted group, and the edit was a regular edit or an item creation.
Reverting edits themselves match the revertish comment patterns and so stay
out of the positive class.
"""

from __future__ import annotations

import json
import random
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .comments import EditKind, classify_comment
from .diff import PropertyRegistry, diff
from .entity import canonical_hash, parse_entity
from .errors import AlreadySplit, DataError, Malformed, SchemaViolation
from .features import (
    FeatureVector,
    PatternConfig,
    SCHEMA_VERSION,
    FEATURE_NAMES,
    default_pattern_config,
    default_property_registry,
    extract,
)
from .ingestion import RevisionEnvelope

CORPUS_FORMAT = "vs-corpus-1"

TRUSTED_GROUPS = frozenset(
    {
        "sysop",
        "checkuser",
        "flood",
        "ipblock-exempt",
        "oversight",
        "property-creator",
        "rollbacker",
        "steward",
        "translationadmin",
        "wikidata-staff",
    }
)

SECONDS_PER_DAY = 86400


@dataclass(frozen=True)
class RevertConfig:
    radius: int = 15
    window: int = 30 * SECONDS_PER_DAY  # seconds

    def __post_init__(self) -> None:
        if self.radius < 1:
            raise ValueError("radius must be >= 1")
        if self.window <= 0:
            raise ValueError("window must be positive")


@dataclass(frozen=True)
class CorpusRecord:
    rev_id: int
    item_id: str
    timestamp: int
    user_trust: str  # "trusted" | "non_trusted"
    edit_kind: str  # EditKind value
    reverted: bool
    label: bool
    split: str = "unassigned"  # "train" | "test" | "unassigned"
    incomplete_history: bool = False
    label_source: str = "auto"  # "auto" | "human"
    features: Optional[FeatureVector] = None

    def __post_init__(self) -> None:
        if self.user_trust not in ("trusted", "non_trusted"):
            raise ValueError(f"bad user_trust {self.user_trust!r}")
        if self.split not in ("train", "test", "unassigned"):
            raise ValueError(f"bad split {self.split!r}")
        if self.label_source not in ("auto", "human"):
            raise ValueError(f"bad label_source {self.label_source!r}")
        if self.label and self.label_source == "auto":
            sound = (
                self.reverted
                and self.user_trust == "non_trusted"
                and self.edit_kind in (EditKind.REGULAR.value, EditKind.CREATION.value)
            )
            if not sound:
                raise ValueError(f"rev {self.rev_id}: label=true violates the labeling rule")

    def to_json_dict(self) -> dict:
        out = {
            "rev_id": self.rev_id,
            "item_id": self.item_id,
            "timestamp": self.timestamp,
            "user_trust": self.user_trust,
            "edit_kind": self.edit_kind,
            "reverted": self.reverted,
            "label": self.label,
            "split": self.split,
            "incomplete_history": self.incomplete_history,
            "label_source": self.label_source,
            "features": list(self.features.values) if self.features is not None else None,
        }
        return out

    @classmethod
    def from_json_dict(cls, data: dict) -> "CorpusRecord":
        raw = data.get("features")
        features = None
        if raw is not None:
            if len(raw) != len(FEATURE_NAMES):
                raise SchemaViolation(
                    f"rev {data.get('rev_id')}: {len(raw)} features, schema has {len(FEATURE_NAMES)}"
                )
            features = FeatureVector(values=tuple(float(v) for v in raw))
        return cls(
            rev_id=data["rev_id"],
            item_id=data["item_id"],
            timestamp=data["timestamp"],
            user_trust=data["user_trust"],
            edit_kind=data["edit_kind"],
            reverted=data["reverted"],
            label=data["label"],
            split=data.get("split", "unassigned"),
            incomplete_history=data.get("incomplete_history", False),
            label_source=data.get("label_source", "auto"),
            features=features,
        )


def is_trusted(groups: Iterable[str], trusted_groups: frozenset = TRUSTED_GROUPS) -> bool:
    return bool(set(groups) & trusted_groups)


# ---------------------------------------------------------------------------
# Revert detection
# ---------------------------------------------------------------------------

def detect_reverted(
    history: Sequence[str], target_index: int, cfg: RevertConfig, timestamps: Sequence[int]
) -> bool:
    """Identity-revert test over one item's ordered revision history.

    ``history`` holds canonical content hashes, ``timestamps`` the matching
    epoch seconds. True when some revision at most ``cfg.radius`` steps and
    ``cfg.window`` seconds after the target (both bounds inclusive) restores
    a content state from strictly before the target.
    """
    if not 0 <= target_index < len(history):
        raise IndexError(f"target_index {target_index} outside history of {len(history)}")
    if len(timestamps) != len(history):
        raise ValueError("timestamps and history lengths differ")
    before = set(history[:target_index])
    if not before:
        # An item's first known revision has no prior state to restore.
        return False
    target_ts = timestamps[target_index]
    last = min(len(history) - 1, target_index + cfg.radius)
    for j in range(target_index + 1, last + 1):
        if timestamps[j] - target_ts > cfg.window:
            break
        if history[j] in before:
            return True
    return False


@dataclass(frozen=True)
class CorpusSummary:
    """Cross-section of edit kinds by trust, with revert and label counts."""

    cells: dict = field(default_factory=dict)  # (edit_kind, user_trust) -> [edits, reverted, labeled]
    total: int = 0
    bots_excluded: int = 0
    incomplete: int = 0

    def to_text(self) -> str:
        lines = [
            f"{'edit kind':<12} {'trust':<12} {'edits':>8} {'reverted':>9} {'vandalism':>10} {'% rev':>7}"
        ]
        for (kind, trust) in sorted(self.cells):
            edits, reverted, labeled = self.cells[(kind, trust)]
            pct = 100.0 * reverted / edits if edits else 0.0
            lines.append(
                f"{kind:<12} {trust:<12} {edits:>8} {reverted:>9} {labeled:>10} {pct:>6.2f}%"
            )
        lines.append(f"total sampled edits: {self.total}")
        lines.append(f"bot edits excluded: {self.bots_excluded}")
        if self.incomplete:
            lines.append(f"records with truncated revert window: {self.incomplete}")
        return "\n".join(lines)


def build_corpus(
    envelopes: Iterable[RevisionEnvelope],
    cfg: Optional[RevertConfig] = None,
    pattern_cfg: Optional[PatternConfig] = None,
    registry: Optional[PropertyRegistry] = None,
    with_features: bool = True,
) -> tuple[list[CorpusRecord], CorpusSummary]:
    """Turn a stream of envelopes into labeled records plus a summary.

    Bot edits never become records but their revisions stay in the item
    histories, so a bot rollback still marks the vandalism it undid as
    reverted. Revert detection needs complete per-item histories; targets
    whose window runs past the end of the stream are kept as negatives and
    flagged incomplete.
    """
    cfg = cfg or RevertConfig()
    pattern_cfg = pattern_cfg or default_pattern_config()
    registry = registry or default_property_registry()

    by_item: dict[str, list[tuple]] = defaultdict(list)
    stream_end = 0
    for envelope in envelopes:
        entity = parse_entity(
            envelope.child_json, rev_id=envelope.meta.rev_id, timestamp=envelope.meta.timestamp
        )
        by_item[entity.item_id].append((envelope, entity))
        stream_end = max(stream_end, envelope.meta.timestamp)

    records: list[CorpusRecord] = []
    cells: dict = {}
    bots_excluded = 0
    incomplete_count = 0

    for item_id, pairs in by_item.items():
        pairs.sort(key=lambda pair: pair[0].meta.rev_id)
        item_envelopes = [pair[0] for pair in pairs]
        parsed = [pair[1] for pair in pairs]
        hashes = [canonical_hash(entity) for entity in parsed]
        timestamps = [e.meta.timestamp for e in item_envelopes]
        rev_index = {e.meta.rev_id: i for i, e in enumerate(item_envelopes)}

        for index, envelope in enumerate(item_envelopes):
            meta = envelope.meta
            if meta.user.is_bot:
                bots_excluded += 1
                continue
            reverted = detect_reverted(hashes, index, cfg, timestamps)
            incomplete = False
            if not reverted:
                tail = len(item_envelopes) - 1 - index
                if tail < cfg.radius and stream_end - meta.timestamp < cfg.window:
                    incomplete = True
                    incomplete_count += 1
            kind = classify_comment(meta.comment, meta)
            trust = "trusted" if (not meta.user.is_anonymous and is_trusted(meta.user.groups, pattern_cfg.trusted_groups)) else "non_trusted"
            label = (
                reverted
                and trust == "non_trusted"
                and kind in (EditKind.REGULAR, EditKind.CREATION)
            )
            features = None
            if with_features:
                if meta.parent_rev_id == 0:
                    parent = None
                elif meta.parent_rev_id in rev_index:
                    parent = parsed[rev_index[meta.parent_rev_id]]
                else:
                    parent = parse_entity(envelope.parent_json)
                child = parsed[index]
                features = extract(diff(parent, child, registry), child, meta, registry, pattern_cfg)
            records.append(
                CorpusRecord(
                    rev_id=meta.rev_id,
                    item_id=item_id,
                    timestamp=meta.timestamp,
                    user_trust=trust,
                    edit_kind=kind.value,
                    reverted=reverted,
                    label=label,
                    incomplete_history=incomplete,
                    features=features,
                )
            )
            cell = cells.setdefault((kind.value, trust), [0, 0, 0])
            cell[0] += 1
            cell[1] += int(reverted)
            cell[2] += int(label)

    records.sort(key=lambda r: r.rev_id)
    summary = CorpusSummary(
        cells=cells, total=len(records), bots_excluded=bots_excluded, incomplete=incomplete_count
    )
    return records, summary


def split_train_test(
    records: Sequence[CorpusRecord], ratio: float = 0.8, seed: int = 0
) -> list[CorpusRecord]:
    """Assign train/test splits uniformly at random, floor(n*ratio) train."""
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    for record in records:
        if record.split != "unassigned":
            raise AlreadySplit(f"rev {record.rev_id} already assigned {record.split!r}")
    ordered = sorted(records, key=lambda r: r.rev_id)
    indices = list(range(len(ordered)))
    random.Random(seed).shuffle(indices)
    n_train = int(len(ordered) * ratio)
    train_set = set(indices[:n_train])
    return [
        replace(record, split="train" if i in train_set else "test")
        for i, record in enumerate(ordered)
    ]


def subsample(
    records: Sequence[CorpusRecord], n: int, mode: str = "edits", seed: int = 0
) -> list[CorpusRecord]:
    """Down-sample a corpus to n records, uniform over edits or whole items."""
    if n >= len(records):
        return list(records)
    rng = random.Random(seed)
    if mode == "edits":
        chosen = rng.sample(list(records), n)
    elif mode == "items":
        by_item: dict[str, list[CorpusRecord]] = defaultdict(list)
        for record in records:
            by_item[record.item_id].append(record)
        items = sorted(by_item)
        rng.shuffle(items)
        chosen = []
        for item in items:
            if len(chosen) >= n:
                break
            chosen.extend(by_item[item])
        chosen = chosen[:n]
    else:
        raise ValueError(f"unknown sample mode {mode!r}")
    return sorted(chosen, key=lambda r: r.rev_id)


# ---------------------------------------------------------------------------
# Corpus files
# ---------------------------------------------------------------------------

def write_corpus(path, records: Sequence[CorpusRecord], header_extra: Optional[dict] = None) -> None:
    header = {
        "corpus_format": CORPUS_FORMAT,
        "feature_schema_version": SCHEMA_VERSION,
        "feature_names": list(FEATURE_NAMES),
        "n_records": len(records),
    }
    if header_extra:
        header.update(header_extra)
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(json.dumps(header, sort_keys=True) + "\n")
        for record in sorted(records, key=lambda r: r.rev_id):
            handle.write(json.dumps(record.to_json_dict(), sort_keys=True) + "\n")


def read_corpus(path) -> tuple[dict, list[CorpusRecord]]:
    path = Path(path)
    records: list[CorpusRecord] = []
    with open(path, encoding="utf-8") as handle:
        header_line = handle.readline()
        if not header_line.strip():
            raise Malformed(f"{path.name}: empty corpus file")
        try:
            header = json.loads(header_line)
        except json.JSONDecodeError as exc:
            raise Malformed(f"{path.name}: bad header line: {exc}") from exc
        if header.get("corpus_format") != CORPUS_FORMAT:
            raise SchemaViolation(
                f"{path.name}: corpus format {header.get('corpus_format')!r}, expected {CORPUS_FORMAT!r}"
            )
        if header.get("feature_schema_version") != SCHEMA_VERSION:
            raise SchemaViolation(
                f"{path.name}: feature schema {header.get('feature_schema_version')!r}, "
                f"expected {SCHEMA_VERSION!r}"
            )
        for line_no, line in enumerate(handle, start=2):
            if not line.strip():
                continue
            try:
                records.append(CorpusRecord.from_json_dict(json.loads(line)))
            except json.JSONDecodeError as exc:
                raise Malformed(f"{path.name}:{line_no}: {exc}") from exc
            except (KeyError, TypeError, ValueError) as exc:
                raise SchemaViolation(f"{path.name}:{line_no}: {exc}") from exc
    return header, records


def check_label_soundness(records: Iterable[CorpusRecord]) -> None:
    """Raise DataError when any auto-labeled positive breaks the proxy rule.

    Construction already enforces this; the checker exists so corpus files
    from any source can be audited. Human overrides are exempt: a reviewer's
    judgment outranks the revert proxy.
    """
    for record in records:
        if not record.label or record.label_source == "human":
            continue
        ok = (
            record.reverted
            and record.user_trust == "non_trusted"
            and record.edit_kind in (EditKind.REGULAR.value, EditKind.CREATION.value)
        )
        if not ok:
            raise DataError(f"rev {record.rev_id}: label=true breaks the labeling rule")


# ---------------------------------------------------------------------------
# Human label overrides (review-tool export)
# ---------------------------------------------------------------------------

LABEL_CLASSES = ("vandalism", "goodfaith_damaging", "good")


def parse_label_export(lines: Iterable[str]) -> dict[int, str]:
    """Parse review-tool label export JSONL into rev_id -> class, latest wins."""
    labels: dict[int, str] = {}
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            event = json.loads(line)
        except json.JSONDecodeError as exc:
            raise Malformed(f"label export line {line_no}: {exc}") from exc
        try:
            rev_id = int(event["rev_id"])
            cls = event["class"]
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaViolation(f"label export line {line_no}: {exc}") from exc
        if cls not in LABEL_CLASSES:
            raise SchemaViolation(f"label export line {line_no}: unknown class {cls!r}")
        labels[rev_id] = cls
    return labels


def apply_label_overrides(
    records: Sequence[CorpusRecord], overrides: dict[int, str]
) -> list[CorpusRecord]:
    """Replace auto labels with human review classes, collapsed to binary."""
    out = []
    for record in records:
        cls = overrides.get(record.rev_id)
        if cls is None:
            out.append(record)
        else:
            out.append(replace(record, label=(cls == "vandalism"), label_source="human"))
    return out
