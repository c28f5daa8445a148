"""Synthetic edit-history generator for desk-scale experiments.

Builds a plausible miniature of the real corpus: items with labels,
statements and sitelinks; a mostly well-behaved editor population; planted
vandalism at a requested prevalence, carried out by anonymous editors and
throwaway accounts and rolled back by trusted patrollers shortly after. The
output is an ingestion fixture directory plus a ground-truth file, so the
full pipeline (build-corpus, train, evaluate, serve) runs on it unchanged.

The generator is versioned; identical specs produce byte-identical
fixtures.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, replace
from pathlib import Path

from .entity import (
    EditMeta,
    EntityRevision,
    Sitelink,
    SnakValue,
    Statement,
    UserInfo,
    serialize_entity,
)
from .errors import InvalidSpec
from .features import default_pattern_config
from .ingestion import RevisionEnvelope, write_fixture

GENERATOR_VERSION = "vs-synth-1"

_LABEL_WORDS = (
    "Alder", "Birchfield", "Caldera", "Dunmore", "Eastvale", "Farrow", "Glenholm",
    "Harwick", "Ilkley", "Juniper", "Kestrel", "Larkspur", "Marlowe", "Norwood",
    "Oakhurst", "Pembry", "Quarry", "Rosedale", "Sutton", "Thornbury", "Ulverton",
    "Vexford", "Westcliff", "Yarrow", "Zetland",
)
_DESC_WORDS = (
    "village", "painter", "footballer", "river", "novel", "physicist", "commune",
    "asteroid", "church", "software company", "mountain", "politician", "album",
)
_LANGS = ("en", "de", "fr", "es", "it", "nl", "sv", "pt", "ru", "pl", "ja", "zh")
_SITES = ("enwiki", "dewiki", "frwiki", "eswiki", "itwiki", "nlwiki", "svwiki", "ruwiki")
_BADGES = ("Q17437796", "Q17437798")
_GENDERS = ("Q6581097", "Q6581072")
_COUNTRIES = ("Q30", "Q183", "Q142", "Q145", "Q38", "Q55", "Q34", "Q155")
_TEAMS = ("Q9616", "Q8682", "Q50602")
_CLASSES = ("Q515", "Q4830453", "Q11424", "Q482994", "Q8502", "Q4022", "Q16521")
_JUNK = ("asdf", "loooool", "xxxxx", "jkjkjk", "zzzzz", "qwerty", "hahaha")


@dataclass(frozen=True)
class SynthSpec:
    n_edits: int
    prevalence: float
    seed: int = 0
    start_ts: int = 1420070400  # 2015-01-01T00:00:00Z
    mean_history: int = 12
    generator_version: str = GENERATOR_VERSION

    def __post_init__(self) -> None:
        if self.n_edits < 10:
            raise InvalidSpec(f"n_edits must be at least 10, got {self.n_edits}")
        if not 0.0 < self.prevalence < 1.0:
            raise InvalidSpec(f"prevalence must be inside (0, 1), got {self.prevalence}")
        if self.mean_history < 3:
            raise InvalidSpec("mean_history must be at least 3")
        if self.generator_version != GENERATOR_VERSION:
            raise InvalidSpec(
                f"spec targets generator {self.generator_version!r}, this is {GENERATOR_VERSION!r}"
            )

    def to_json_dict(self) -> dict:
        return {
            "n_edits": self.n_edits,
            "prevalence": self.prevalence,
            "seed": self.seed,
            "start_ts": self.start_ts,
            "mean_history": self.mean_history,
            "generator_version": self.generator_version,
        }


# ---------------------------------------------------------------------------
# Editor population
# ---------------------------------------------------------------------------

@dataclass
class _Population:
    editors: list  # established registered users, some with extra groups
    patrollers: list  # trusted rollbackers who perform reverts
    bots: list
    users: dict  # name -> UserInfo

    def random_ip(self, rng: random.Random) -> UserInfo:
        name = f"{rng.randint(1, 223)}.{rng.randint(0, 255)}.{rng.randint(0, 255)}.{rng.randint(1, 254)}"
        return UserInfo(name=name, is_anonymous=True)

    def fresh_account(self, rng: random.Random, edit_ts: int, index: int) -> UserInfo:
        user = UserInfo(
            name=f"Newcomer{index}",
            registration=edit_ts - rng.randint(300, 72 * 3600),
        )
        self.users[user.name] = user
        return user


def _build_population(rng: random.Random, spec: SynthSpec) -> _Population:
    users: dict = {}
    editors = []
    n_editors = max(12, spec.n_edits // 40)
    for i in range(n_editors):
        groups = frozenset()
        roll = rng.random()
        if roll < 0.02:
            groups = frozenset({"sysop"})
        elif roll < 0.07:
            groups = frozenset({"rollbacker"})
        elif roll < 0.13:
            groups = frozenset({rng.choice(("autopatrolled", "reviewer", "abusefilter"))})
        user = UserInfo(
            name=f"Editor{i}",
            groups=groups,
            registration=spec.start_ts - rng.randint(90, 2000) * 86400,
        )
        users[user.name] = user
        editors.append(user)
    patrollers = []
    for i in range(max(3, n_editors // 10)):
        user = UserInfo(
            name=f"Patroller{i}",
            groups=frozenset({"rollbacker"}),
            registration=spec.start_ts - rng.randint(365, 2500) * 86400,
        )
        users[user.name] = user
        patrollers.append(user)
    bots = []
    for i in range(2):
        user = UserInfo(
            name=f"TaskBot{i}",
            is_bot=True,
            groups=frozenset({"bot"}),
            registration=spec.start_ts - rng.randint(365, 2500) * 86400,
        )
        users[user.name] = user
        bots.append(user)
    return _Population(editors=editors, patrollers=patrollers, bots=bots, users=users)


# ---------------------------------------------------------------------------
# Entity construction and mutation
# ---------------------------------------------------------------------------

def _stmt(pid: str, kind: str, value: str, rank: str = "normal") -> Statement:
    return Statement(property=pid, value=SnakValue(kind=kind, value=value), rank=rank)


def _with_statement(rev: EntityRevision, stmt: Statement) -> EntityRevision:
    statements = dict(rev.statements)
    statements[stmt.property] = statements.get(stmt.property, ()) + (stmt,)
    return replace(rev, statements=statements)


def _set_single_statement(rev: EntityRevision, stmt: Statement) -> EntityRevision:
    statements = dict(rev.statements)
    statements[stmt.property] = (stmt,)
    return replace(rev, statements=statements)


def _drop_property(rev: EntityRevision, pid: str) -> EntityRevision:
    if pid not in rev.statements:
        return rev
    statements = dict(rev.statements)
    del statements[pid]
    return replace(rev, statements=statements)


def _rand_date(rng: random.Random, year_lo: int = 1850, year_hi: int = 2000) -> str:
    return f"+{rng.randint(year_lo, year_hi)}-{rng.randint(1, 12):02d}-{rng.randint(1, 28):02d}T00:00:00Z"


def _rand_label(rng: random.Random) -> str:
    if rng.random() < 0.3:
        return f"{rng.choice(_LABEL_WORDS)} {rng.choice(_LABEL_WORDS)}"
    return rng.choice(_LABEL_WORDS)


def _create_entity(rng: random.Random, item_id: str) -> EntityRevision:
    name = _rand_label(rng)
    labels = {"en": name}
    for lang in rng.sample(_LANGS[1:], rng.randint(0, 3)):
        labels[lang] = name
    rev = EntityRevision(item_id=item_id, labels=labels)
    if rng.random() < 0.8:
        rev = replace(rev, descriptions={"en": rng.choice(_DESC_WORDS)})
    if rng.random() < 0.45:
        # A human, the shape most context features care about.
        rev = _with_statement(rev, _stmt("P31", "item", "Q5"))
        rev = _set_single_statement(rev, _stmt("P21", "item", rng.choice(_GENDERS)))
        if rng.random() < 0.7:
            rev = _set_single_statement(rev, _stmt("P569", "time", _rand_date(rng)))
        if rng.random() < 0.25:
            rev = _set_single_statement(rev, _stmt("P570", "time", _rand_date(rng, 1900, 2014)))
        if rng.random() < 0.4:
            rev = _set_single_statement(rev, _stmt("P27", "item", rng.choice(_COUNTRIES)))
        if rng.random() < 0.15:
            rev = _set_single_statement(rev, _stmt("P54", "item", rng.choice(_TEAMS)))
    else:
        rev = _with_statement(rev, _stmt("P31", "item", rng.choice(_CLASSES)))
    if rng.random() < 0.5:
        site = rng.choice(_SITES)
        rev = replace(rev, sitelinks={site: Sitelink(site=site, title=name)})
    return rev


def _good_mutation(rng: random.Random, rev: EntityRevision) -> EntityRevision:
    choice = rng.random()
    name = next(iter(rev.labels.values()), _rand_label(rng))
    if choice < 0.15:
        lang = rng.choice(_LANGS)
        labels = dict(rev.labels)
        value = name if rng.random() < 0.8 else _rand_label(rng)
        while labels.get(lang) == value:
            value = _rand_label(rng)
        labels[lang] = value
        return replace(rev, labels=labels)
    if choice < 0.26:
        lang = rng.choice(_LANGS[:4])
        descriptions = dict(rev.descriptions)
        fresh = [w for w in _DESC_WORDS if w != descriptions.get(lang)]
        descriptions[lang] = rng.choice(fresh)
        return replace(rev, descriptions=descriptions)
    if choice < 0.33:
        aliases = {k: v for k, v in rev.aliases.items()}
        existing = aliases.get("en", ())
        candidate = f"{name} ({rng.choice(_DESC_WORDS)})"
        if candidate in existing:
            candidate = f"{name} ({rng.choice(_DESC_WORDS)} {rng.randint(2, 9)})"
        if candidate not in existing:
            aliases["en"] = existing + (candidate,)
        return replace(rev, aliases=aliases)
    if choice < 0.37:
        # Cleanup: drop the stalest alias. Trimming the oldest entry of a
        # multi-entry list never lands the item back on an earlier state.
        aliases = dict(rev.aliases)
        for lang in sorted(aliases):
            if len(aliases[lang]) >= 2:
                aliases[lang] = aliases[lang][1:]
                return replace(rev, aliases=aliases)
        return replace(rev, descriptions={**rev.descriptions, "en": rng.choice(_DESC_WORDS)})
    if choice < 0.46:
        site = rng.choice(_SITES)
        sitelinks = dict(rev.sitelinks)
        badges = (rng.choice(_BADGES),) if rng.random() < 0.1 else ()
        link = Sitelink(site=site, title=name, badges=badges)
        if sitelinks.get(site) == link:
            link = Sitelink(site=site, title=f"{name} ({site.removesuffix('wiki')})", badges=badges)
        sitelinks[site] = link
        return replace(rev, sitelinks=sitelinks)
    if choice < 0.50:
        # Cleanup: retire the longest-standing interwiki link, and only when
        # another remains, so the removal cannot reproduce an older revision.
        if len(rev.sitelinks) >= 2:
            sitelinks = dict(rev.sitelinks)
            sitelinks.pop(next(iter(sitelinks)))
            return replace(rev, sitelinks=sitelinks)
        site = rng.choice(_SITES)
        return replace(rev, sitelinks={site: Sitelink(site=site, title=name)})
    if choice < 0.59:
        pid = rng.choice(("P214", "P227", "P345", "P646"))
        return _set_single_statement(rev, _stmt(pid, "external-id", f"id{rng.randint(1000, 999999)}"))
    if choice < 0.66:
        stmt = _stmt("P1082", "quantity", str(rng.randint(100, 3_000_000)))
        return _set_single_statement(rev, stmt)
    if choice < 0.70:
        stmt = Statement(
            property="P569" if "P569" not in rev.statements and "Q5" in _p31_values(rev) else "P585",
            value=SnakValue(kind="time", value=_rand_date(rng)),
        )
        return _set_single_statement(rev, stmt)
    if choice < 0.78:
        # Fact correction: sourced biographies get their dates, citizenship,
        # and club memberships fixed all the time, by perfectly good editors.
        # Corrections always move to a value the claim does not hold now;
        # gender fixes are kept rare because a two-value property corrected
        # twice would walk the item straight back onto an earlier revision.
        fixable = [p for p in ("P27", "P54", "P569", "P570") if p in rev.statements]
        if not fixable and "P21" in rev.statements and rng.random() < 0.2:
            current = {s.value.value for s in rev.statements["P21"]}
            other = _GENDERS[1] if _GENDERS[0] in current else _GENDERS[0]
            return _set_single_statement(rev, _stmt("P21", "item", other))
        if fixable:
            pid = rng.choice(fixable)
            if pid in ("P27", "P54"):
                pool = _COUNTRIES if pid == "P27" else _TEAMS
                current = {s.value.value for s in rev.statements[pid]}
                fresh = [q for q in pool if q not in current]
                return _set_single_statement(rev, _stmt(pid, "item", rng.choice(fresh or list(pool))))
            return _set_single_statement(rev, _stmt(pid, "time", _rand_date(rng)))
        return _set_single_statement(rev, _stmt("P1082", "quantity", str(rng.randint(100, 3_000_000))))
    if choice < 0.81:
        # Import-style batch: a handful of claims landed in one save.
        out = rev
        out = _with_statement(out, _stmt("P31", "item", rng.choice(_CLASSES)))
        for _ in range(rng.randint(1, 2)):
            pid = rng.choice(("P214", "P227", "P345", "P646"))
            out = _with_statement(out, _stmt(pid, "external-id", f"id{rng.randint(1000, 999999)}"))
        return out
    if choice < 0.85:
        # Cleanup: remove a claim that no longer belongs. Taking the
        # lowest-numbered removable property biases toward creation-era
        # claims, keeping accidental restores of recent states rare.
        removable = [p for p in sorted(rev.statements) if p not in ("P31", "P21")]
        if len(removable) >= 2:
            return _drop_property(rev, removable[0])
        return _set_single_statement(rev, _stmt("P1082", "quantity", str(rng.randint(100, 3_000_000))))
    if choice < 0.89:
        # Sourcing an existing claim: attach a reference to the first statement.
        for pid, stmts in sorted(rev.statements.items()):
            stmt = stmts[0]
            if not stmt.references:
                url = f"https://source{rng.randint(1, 400)}.example.org/article/{rng.randint(1, 9000)}"
                new = replace(stmt, references=((("P854", SnakValue(kind="url", value=url)),),))
                statements = dict(rev.statements)
                statements[pid] = (new,) + stmts[1:]
                return replace(rev, statements=statements)
        return _with_statement(rev, _stmt("P31", "item", rng.choice(_CLASSES)))
    if choice < 0.945 and rng.random() < 0.5:
        stmt = _stmt("P856", "url", f"https://www.{name.lower().replace(' ', '')}{rng.randint(1, 99)}.example.com")
        return _set_single_statement(rev, stmt)
    qual_target = sorted(rev.statements)
    if qual_target:
        pid = rng.choice(qual_target)
        stmts = rev.statements[pid]
        stmt = stmts[0]
        new = replace(
            stmt, qualifiers=stmt.qualifiers + (("P585", SnakValue(kind="time", value=_rand_date(rng))),)
        )
        statements = dict(rev.statements)
        statements[pid] = (new,) + stmts[1:]
        return replace(rev, statements=statements)
    return replace(rev, labels={**rev.labels, "en": name})


def _p31_values(rev: EntityRevision) -> set:
    return {s.value.value for s in rev.statements.get("P31", ())}


_VANDAL_KINDS = (
    "blank_label", "scribble", "qid_spam", "gender_flip", "dob_change",
    "url_spam", "image_junk", "sitelink_wipe", "alias_junk",
)

# Sneaky value flips outnumber loud blanking; matches what patrollers see.
_VANDAL_KIND_WEIGHTS = (7, 14, 7, 16, 16, 8, 13, 5, 7)


def _vandal_mutation(rng: random.Random, rev: EntityRevision, language_items: tuple) -> EntityRevision:
    kind = rng.choices(_VANDAL_KINDS, weights=_VANDAL_KIND_WEIGHTS, k=1)[0]
    if kind == "blank_label":
        labels = dict(rev.labels)
        if labels:
            labels.pop(rng.choice(sorted(labels)))
        descriptions = dict(rev.descriptions)
        if descriptions and rng.random() < 0.5:
            descriptions.pop(rng.choice(sorted(descriptions)))
        return replace(rev, labels=labels, descriptions=descriptions)
    if kind == "scribble":
        labels = dict(rev.labels)
        labels["en"] = rng.choice(_JUNK)
        return replace(rev, labels=labels)
    if kind == "qid_spam":
        out = rev
        for _ in range(rng.randint(2, 5)):
            out = _with_statement(out, _stmt(rng.choice(("P31", "P361")), "item", rng.choice(language_items)))
        return out
    if kind == "gender_flip":
        current = {s.value.value for s in rev.statements.get("P21", ())}
        flipped = _GENDERS[1] if _GENDERS[0] in current else _GENDERS[0]
        return _set_single_statement(rev, _stmt("P21", "item", flipped))
    if kind == "dob_change":
        return _set_single_statement(rev, _stmt("P569", "time", _rand_date(rng, 1000, 1500)))
    if kind == "url_spam":
        out = rev
        for _ in range(rng.randint(2, 3)):
            out = _with_statement(
                out, _stmt("P856", "url", f"http://spam{rng.randint(1, 9999)}.example.biz")
            )
        return out
    if kind == "image_junk":
        return _set_single_statement(rev, _stmt("P18", "string", f"Junk{rng.randint(1, 999)}.jpg"))
    if kind == "sitelink_wipe":
        if rev.sitelinks:
            return replace(rev, sitelinks={})
        labels = dict(rev.labels)
        labels["en"] = rng.choice(_JUNK)
        return replace(rev, labels=labels)
    aliases = dict(rev.aliases)
    junk = tuple(rng.sample(_JUNK, rng.randint(2, 4)))
    existing = aliases.get("en", ())
    aliases["en"] = existing + tuple(j for j in junk if j not in existing)
    return replace(rev, aliases=aliases)


# ---------------------------------------------------------------------------
# Timeline assembly
# ---------------------------------------------------------------------------

@dataclass
class SynthResult:
    envelopes: list
    users: dict
    truth: dict


def generate(spec: SynthSpec) -> SynthResult:
    rng = random.Random(spec.seed)
    population = _build_population(rng, spec)
    language_items = tuple(sorted(default_pattern_config().language_item_ids))

    # Plan item history lengths until the edit budget is met. Each planned
    # vandal consumes two slots: the bad edit and its rollback.
    lengths = []
    remaining = spec.n_edits
    spread = 2 * spec.mean_history - 4
    while remaining > 0:
        drawn = 2 + sum(1 for _ in range(spread) if rng.random() < 0.5)
        length = max(2, min(remaining, drawn))
        if remaining - length == 1:
            length += 1
        lengths.append(length)
        remaining -= length

    n_vandals = round(spec.n_edits * spec.prevalence)

    # Slot plan per item: "c" creation, "g" good, "v" vandal, "r" rollback,
    # "x" accidental identity revert by an ordinary editor (label noise).
    plans = [["c"] + ["g"] * (length - 1) for length in lengths]
    pair_slots = []
    for item_index, plan in enumerate(plans):
        for slot in range(1, len(plan) - 1):
            pair_slots.append((item_index, slot))
    rng.shuffle(pair_slots)
    planted = 0
    for item_index, slot in pair_slots:
        if planted >= n_vandals:
            break
        plan = plans[item_index]
        if plan[slot] == "g" and plan[slot + 1] == "g":
            plan[slot] = "v"
            plan[slot + 1] = "r"
            planted += 1
    for plan in plans:
        for slot in range(3, len(plan)):
            if (
                plan[slot] == "g"
                and plan[slot - 1] == "g"
                and plan[slot - 2] == "g"
                and rng.random() < 0.001
            ):
                plan[slot] = "x"

    # Interleave items into one global timeline; a rollback always lands
    # right after the edit it undoes, minutes later.
    cursors = [0] * len(plans)
    active = list(range(len(plans)))
    ts = spec.start_ts
    rev_id = 1000
    envelopes = []
    vandal_rev_ids = []
    noise_rev_ids = []
    bot_rev_ids = []
    fresh_index = 0
    state: dict[int, EntityRevision] = {}
    snapshots: dict[int, list] = {}
    last_rev: dict[int, int] = {}
    kind_counts = {"c": 0, "g": 0, "v": 0, "r": 0, "x": 0}

    def emit(item_index: int, slot_kind: str) -> None:
        nonlocal ts, rev_id, fresh_index
        item_id = f"Q{1000 + item_index}"
        previous = state.get(item_index)
        parent_rev = last_rev.get(item_index, 0)
        parent_json = serialize_entity(previous) if previous is not None else None

        if slot_kind == "c":
            entity = _create_entity(rng, item_id)
            user = population.random_ip(rng) if rng.random() < 0.05 else rng.choice(population.editors)
            comment = "/* wbeditentity-create:2|en */ " + entity.labels.get("en", "item")
        elif slot_kind == "g":
            entity = _good_mutation(rng, previous)
            roll = rng.random()
            if roll < 0.04:
                user = population.random_ip(rng)
            elif roll < 0.055:
                fresh_index += 1
                user = population.fresh_account(rng, ts, fresh_index)
            else:
                user = rng.choice(population.editors)
            comment = _good_comment(rng, entity, previous)
        elif slot_kind == "v":
            entity = _vandal_mutation(rng, previous, language_items)
            if rng.random() < 0.7:
                user = population.random_ip(rng)
            else:
                fresh_index += 1
                user = population.fresh_account(rng, ts, fresh_index)
            comment = rng.choice(("", "fixed", "update", "added info", "improved the page"))
        elif slot_kind == "r":
            entity = snapshots[item_index][-2]  # state before the vandal edit
            user = rng.choice(population.patrollers)
            comment = f"Reverted edits by {envelopes[-1].meta.user.name} to last revision"
        else:  # "x": ordinary editor restores an older state, comment mundane
            entity = snapshots[item_index][-2]
            user = rng.choice(population.editors)
            comment = "undo accidental change"

        entity = replace(entity, rev_id=rev_id, timestamp=ts)
        meta = EditMeta(rev_id=rev_id, parent_rev_id=parent_rev, user=user, comment=comment, timestamp=ts)
        envelopes.append(
            RevisionEnvelope(meta=meta, child_json=serialize_entity(entity), parent_json=parent_json)
        )
        if slot_kind == "v":
            vandal_rev_ids.append(rev_id)
        if slot_kind == "x":
            noise_rev_ids.append(rev_id)
        kind_counts[slot_kind] += 1
        state[item_index] = entity
        snapshots.setdefault(item_index, []).append(entity)
        last_rev[item_index] = rev_id
        rev_id += 1

    previous_kind = None
    previous_item = None
    while active:
        if previous_kind == "v":
            item_index = previous_item  # rollback arrives within minutes
            ts += rng.randint(60, 900)
        else:
            item_index = rng.choice(active)
            ts += rng.randint(20, 240)
        slot_kind = plans[item_index][cursors[item_index]]
        emit(item_index, slot_kind)
        previous_kind = slot_kind
        previous_item = item_index
        cursors[item_index] += 1
        if cursors[item_index] >= len(plans[item_index]):
            active.remove(item_index)

        # Sprinkle occasional bot housekeeping edits on a random live item;
        # they are stream content, not sampled corpus rows.
        if slot_kind != "v" and active and rng.random() < 0.012:
            bot_item = rng.choice(active)
            if cursors[bot_item] > 0:
                ts += rng.randint(5, 60)
                bot_user = rng.choice(population.bots)
                entity = _good_mutation(rng, state[bot_item])
                entity = replace(entity, rev_id=rev_id, timestamp=ts)
                meta = EditMeta(
                    rev_id=rev_id,
                    parent_rev_id=last_rev[bot_item],
                    user=bot_user,
                    comment="/* clientsitelink-update:0|enwiki */ bot maintenance",
                    timestamp=ts,
                )
                envelopes.append(
                    RevisionEnvelope(
                        meta=meta,
                        child_json=serialize_entity(entity),
                        parent_json=serialize_entity(state[bot_item]),
                    )
                )
                bot_rev_ids.append(rev_id)
                state[bot_item] = entity
                snapshots[bot_item].append(entity)
                last_rev[bot_item] = rev_id
                rev_id += 1

    truth = {
        "generator_version": GENERATOR_VERSION,
        "spec": spec.to_json_dict(),
        "n_edits": len(envelopes) - len(bot_rev_ids),
        "n_items": len(plans),
        "vandal_rev_ids": vandal_rev_ids,
        "accidental_revert_rev_ids": noise_rev_ids,
        "bot_rev_ids": bot_rev_ids,
        "slot_counts": kind_counts,
    }
    return SynthResult(envelopes=envelopes, users=population.users, truth=truth)


def _good_comment(rng: random.Random, entity: EntityRevision, previous: EntityRevision) -> str:
    roll = rng.random()
    if roll < 0.012:
        return "/* clientsitelink-update:0|enwiki */ page moved on client wiki"
    if roll < 0.018:
        return f"/* wbmergeitems-to:0||Q{rng.randint(1, 900)} */ merged duplicate"
    if roll < 0.024:
        return "Restored missing description"
    if entity.labels != previous.labels:
        return "/* wbsetlabel-add:1|en */ label"
    if entity.sitelinks != previous.sitelinks:
        return "/* wbsetsitelink-add:1|enwiki */ sitelink"
    return "/* wbsetclaim-create:1| */ claim"


def write_synth_fixture(spec: SynthSpec, out_dir) -> dict:
    """Generate and write the fixture directory plus truth.json."""
    result = generate(spec)
    out_dir = Path(out_dir)
    write_fixture(out_dir, result.envelopes, users=result.users)
    (out_dir / "truth.json").write_text(
        json.dumps(result.truth, indent=1, sort_keys=True), encoding="utf-8"
    )
    return result.truth
