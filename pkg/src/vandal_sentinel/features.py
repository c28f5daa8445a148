"""The 53-entry feature vector extracted from one edit.

Features come in four groups that the ablation harness trains separately:
general (section change counts), context (content patterns typical of
vandalism), type (edit kinds that are typically not vandalism) and user
(editor characteristics). Extraction reads only the parent/child diff, the
child revision and the edit metadata: nothing that becomes known after the
edit is saved may feed a feature.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

from .comments import DEFAULT_COMMENT_RULES, EditKind, classify_comment, compile_rules
from .diff import EntityDiff, PropertyRegistry
from .entity import EditMeta, EntityRevision
from .errors import DataError, SchemaMismatch

SCHEMA_VERSION = "vs-features-1"


class FeatureGroup(str, Enum):
    GENERAL = "general"
    CONTEXT = "context"
    TYPE = "type"
    USER = "user"


def _general(names: Iterable[str]):
    return [(n, FeatureGroup.GENERAL) for n in names]


#: Fixed schema: (name, group) in vector order. Versioned via SCHEMA_VERSION;
#: model files and corpus files embed the version so mismatched artifacts are
#: rejected instead of silently misaligned.
FEATURE_SCHEMA: tuple[tuple[str, FeatureGroup], ...] = tuple(
    _general(
        [
            "sitelinks_added", "sitelinks_removed", "sitelinks_changed", "sitelinks_current",
            "labels_added", "labels_removed", "labels_changed", "labels_current",
            "descriptions_added", "descriptions_removed", "descriptions_changed", "descriptions_current",
            "statements_added", "statements_removed", "statements_changed", "statements_current",
            "aliases_added", "aliases_removed", "aliases_current",
            "badges_added", "badges_removed", "badges_current",
            "qualifiers_added", "qualifiers_removed", "qualifiers_current",
            "references_added", "references_removed", "references_current",
            "identifiers_changed",
        ]
    )
    + [
        ("proportion_qids_added", FeatureGroup.CONTEXT),
        ("english_label_changed", FeatureGroup.CONTEXT),
        ("proportion_language_names_added", FeatureGroup.CONTEXT),
        ("proportion_external_links_added", FeatureGroup.CONTEXT),
        ("gender_changed", FeatureGroup.CONTEXT),
        ("citizenship_changed", FeatureGroup.CONTEXT),
        ("sports_team_changed", FeatureGroup.CONTEXT),
        ("dob_changed", FeatureGroup.CONTEXT),
        ("image_changed", FeatureGroup.CONTEXT),
        ("signature_changed", FeatureGroup.CONTEXT),
        ("commons_category_changed", FeatureGroup.CONTEXT),
        ("official_website_changed", FeatureGroup.CONTEXT),
        ("is_human", FeatureGroup.CONTEXT),
        ("is_living_human", FeatureGroup.CONTEXT),
        ("is_client_edit", FeatureGroup.TYPE),
        ("is_merge", FeatureGroup.TYPE),
        ("is_revertish", FeatureGroup.TYPE),
        ("is_item_creation", FeatureGroup.TYPE),
        ("is_bot", FeatureGroup.USER),
        ("has_advanced_rights", FeatureGroup.USER),
        ("is_admin", FeatureGroup.USER),
        ("is_curator", FeatureGroup.USER),
        ("is_anonymous", FeatureGroup.USER),
        ("log_age", FeatureGroup.USER),
    ]
)

FEATURE_NAMES: tuple[str, ...] = tuple(name for name, _ in FEATURE_SCHEMA)
FEATURE_INDEX: dict[str, int] = {name: i for i, name in enumerate(FEATURE_NAMES)}
N_FEATURES = len(FEATURE_SCHEMA)

ALL_GROUPS = frozenset(FeatureGroup)

#: Changed-property flags: feature name -> PatternConfig binding attribute.
_CHANGE_FLAG_FEATURES = (
    ("gender_changed", "gender_property"),
    ("citizenship_changed", "citizenship_property"),
    ("sports_team_changed", "sports_team_property"),
    ("dob_changed", "date_of_birth_property"),
    ("image_changed", "image_property"),
    ("signature_changed", "signature_property"),
    ("commons_category_changed", "commons_category_property"),
    ("official_website_changed", "official_website_property"),
)


@dataclass(frozen=True)
class PatternConfig:
    """Vocabulary bindings and group sets the extractor depends on.

    Property/Q-id bindings default to the canonical Wikidata vocabulary but
    live in configuration so tests can run on toy vocabularies.
    """

    feature_schema_version: str = SCHEMA_VERSION
    gender_property: str = "P21"
    citizenship_property: str = "P27"
    sports_team_property: str = "P54"
    date_of_birth_property: str = "P569"
    image_property: str = "P18"
    signature_property: str = "P109"
    commons_category_property: str = "P373"
    official_website_property: str = "P856"
    instance_of_property: str = "P31"
    human_item: str = "Q5"
    date_of_death_property: str = "P570"
    trusted_groups: frozenset[str] = frozenset(
        {
            "sysop", "checkuser", "flood", "ipblock-exempt", "oversight",
            "property-creator", "rollbacker", "steward", "translationadmin",
            "wikidata-staff",
        }
    )
    advanced_groups: frozenset[str] = frozenset({"checkuser", "bureaucrat", "oversight"})
    curator_groups: frozenset[str] = frozenset({"rollbacker", "abusefilter", "autopatrolled", "reviewer"})
    admin_groups: frozenset[str] = frozenset({"sysop"})
    language_item_ids: frozenset[str] = frozenset()
    comment_rules: tuple[tuple[EditKind, str], ...] = DEFAULT_COMMENT_RULES

    def compiled_rules(self):
        return compile_rules(self.comment_rules)

    def to_json_dict(self) -> dict:
        return {
            "feature_schema_version": self.feature_schema_version,
            "properties": {
                "gender": self.gender_property,
                "citizenship": self.citizenship_property,
                "sports_team": self.sports_team_property,
                "date_of_birth": self.date_of_birth_property,
                "image": self.image_property,
                "signature": self.signature_property,
                "commons_category": self.commons_category_property,
                "official_website": self.official_website_property,
                "instance_of": self.instance_of_property,
                "date_of_death": self.date_of_death_property,
            },
            "human_item": self.human_item,
            "groups": {
                "trusted": sorted(self.trusted_groups),
                "advanced": sorted(self.advanced_groups),
                "curator": sorted(self.curator_groups),
                "admin": sorted(self.admin_groups),
            },
            "language_item_ids": sorted(self.language_item_ids),
            "comment_rules": [[kind.value, pattern] for kind, pattern in self.comment_rules],
        }

    @classmethod
    def from_json_dict(cls, data: dict) -> "PatternConfig":
        props = data.get("properties", {})
        groups = data.get("groups", {})
        kwargs = {}
        if "feature_schema_version" in data:
            kwargs["feature_schema_version"] = data["feature_schema_version"]
        mapping = {
            "gender": "gender_property",
            "citizenship": "citizenship_property",
            "sports_team": "sports_team_property",
            "date_of_birth": "date_of_birth_property",
            "image": "image_property",
            "signature": "signature_property",
            "commons_category": "commons_category_property",
            "official_website": "official_website_property",
            "instance_of": "instance_of_property",
            "date_of_death": "date_of_death_property",
        }
        for key, attr in mapping.items():
            if key in props:
                kwargs[attr] = props[key]
        if "human_item" in data:
            kwargs["human_item"] = data["human_item"]
        for key, attr in (
            ("trusted", "trusted_groups"),
            ("advanced", "advanced_groups"),
            ("curator", "curator_groups"),
            ("admin", "admin_groups"),
        ):
            if key in groups:
                kwargs[attr] = frozenset(groups[key])
        if "language_item_ids" in data:
            kwargs["language_item_ids"] = frozenset(data["language_item_ids"])
        if "comment_rules" in data:
            kwargs["comment_rules"] = tuple(
                (EditKind(kind), pattern) for kind, pattern in data["comment_rules"]
            )
        return cls(**kwargs)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "PatternConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise DataError(f"bad pattern config {path}: {exc}") from exc
        return cls.from_json_dict(data)


def default_pattern_config() -> PatternConfig:
    """Shipped defaults: canonical property bindings plus the packaged
    language-item list (a curated subset, overridable per deployment)."""
    text = resources.files("vandal_sentinel.data").joinpath("language_items.txt").read_text("utf-8")
    langs = frozenset(line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#"))
    return PatternConfig(language_item_ids=langs)


def default_property_registry() -> PropertyRegistry:
    text = resources.files("vandal_sentinel.data").joinpath("property_registry.txt").read_text("utf-8")
    return PropertyRegistry.from_lines(text.splitlines())


@dataclass(frozen=True)
class FeatureVector:
    """53 ordered real values; booleans encoded 0/1."""

    values: tuple[float, ...]
    schema_version: str = SCHEMA_VERSION

    def __post_init__(self) -> None:
        if len(self.values) != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} features, got {len(self.values)}")

    def __getitem__(self, name: str) -> float:
        return self.values[FEATURE_INDEX[name]]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, self.values))


def group_indices(groups: Iterable[FeatureGroup]) -> tuple[int, ...]:
    wanted = set(groups)
    return tuple(i for i, (_, g) in enumerate(FEATURE_SCHEMA) if g in wanted)


def group_feature_names(groups: Iterable[FeatureGroup]) -> tuple[str, ...]:
    return tuple(FEATURE_NAMES[i] for i in group_indices(groups))


def select_group(vector: FeatureVector, groups: Iterable[FeatureGroup]) -> tuple[float, ...]:
    """Sub-vector for the requested groups, in schema order."""
    groups = set(groups)
    if not groups:
        raise ValueError("groups must be nonempty")
    return tuple(vector.values[i] for i in group_indices(groups))


def extract(
    diff: EntityDiff,
    child: EntityRevision,
    meta: EditMeta,
    registry: Optional[PropertyRegistry] = None,
    cfg: Optional[PatternConfig] = None,
) -> FeatureVector:
    """Extract the feature vector for one edit.

    The registry parameter is accepted for interface symmetry with the diff
    stage; identifier datatypes already fed the diff's counts.
    """
    cfg = cfg if cfg is not None else default_pattern_config()
    if cfg.feature_schema_version != SCHEMA_VERSION:
        raise SchemaMismatch(
            f"pattern config targets schema {cfg.feature_schema_version!r}, extractor is {SCHEMA_VERSION!r}"
        )

    named: dict[str, float] = {}
    for name, group in FEATURE_SCHEMA:
        if group is FeatureGroup.GENERAL:
            named[name] = float(getattr(diff, name))

    named["proportion_qids_added"] = (diff.added_item_refs - diff.removed_item_refs) / (
        diff.parent_item_refs + 1
    )
    named["english_label_changed"] = float("en" in diff.changed_label_languages)
    language_adds = sum(n for qid, n in diff.added_qids.items() if qid in cfg.language_item_ids)
    named["proportion_language_names_added"] = language_adds / (diff.added_item_refs + 1)
    named["proportion_external_links_added"] = diff.added_urls / (diff.parent_urls + 1)
    for feature_name, attr in _CHANGE_FLAG_FEATURES:
        named[feature_name] = float(getattr(cfg, attr) in diff.changed_properties)

    is_human = any(
        s.value.kind == "item" and s.value.value == cfg.human_item
        for s in child.statements.get(cfg.instance_of_property, ())
    )
    named["is_human"] = float(is_human)
    named["is_living_human"] = float(is_human and cfg.date_of_death_property not in child.statements)

    kind = classify_comment(meta.comment, meta, cfg.compiled_rules())
    named["is_client_edit"] = float(kind is EditKind.CLIENT)
    named["is_merge"] = float(kind is EditKind.MERGE)
    named["is_revertish"] = float(kind is EditKind.REVERTISH)
    named["is_item_creation"] = float(diff.is_creation)

    user = meta.user
    named["is_bot"] = float(user.is_bot)
    named["has_advanced_rights"] = float(bool(user.groups & cfg.advanced_groups))
    named["is_admin"] = float(bool(user.groups & cfg.admin_groups))
    named["is_curator"] = float(bool(user.groups & cfg.curator_groups))
    named["is_anonymous"] = float(user.is_anonymous)
    if user.is_anonymous or user.registration is None:
        named["log_age"] = 0.0
    else:
        named["log_age"] = math.log(max(0, meta.timestamp - user.registration) + 1)

    return FeatureVector(values=tuple(named[name] for name in FEATURE_NAMES))


def parse_group_spec(spec: str) -> frozenset[FeatureGroup]:
    """Parse CLI group specs: "all" or comma-separated group names."""
    spec = spec.strip().lower()
    if spec == "all":
        return frozenset(FeatureGroup)
    try:
        return frozenset(FeatureGroup(part.strip()) for part in spec.split(",") if part.strip())
    except ValueError as exc:
        raise DataError(f"unknown feature group in {spec!r}") from exc


def group_spec_label(groups: Iterable[FeatureGroup]) -> str:
    groups = set(groups)
    if groups == set(FeatureGroup):
        return "all"
    order = [FeatureGroup.GENERAL, FeatureGroup.TYPE, FeatureGroup.CONTEXT, FeatureGroup.USER]
    return ",".join(g.value for g in order if g in groups)
