"""Shared test helpers.

The random entity builders here are intentionally independent of the
synthetic corpus generator: oracle tests should not inherit its habits.
"""
from __future__ import annotations

import random


from vandal_sentinel.entity import (
    EditMeta,
    EntityRevision,
    Sitelink,
    SnakValue,
    Statement,
    UserInfo,
)

_WORDS = (
    "alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf",
    "hotel", "india", "juliet", "kilo", "lima", "mike", "november",
)
_LANGS = ("en", "de", "fr", "es", "it", "nl", "sv", "pt")
_SITES = ("enwiki", "dewiki", "frwiki", "eswiki", "itwiki", "commons")
_BADGES = ("Q17437796", "Q17437798", "Q17559452")
_PIDS = ("P31", "P21", "P27", "P54", "P569", "P856", "P18", "P214", "P1082", "P585")


def random_snak(rng: random.Random) -> SnakValue:
    kind = rng.choice(("item", "string", "url", "time", "quantity", "external-id"))
    if kind == "item":
        return SnakValue(kind="item", value=f"Q{rng.randint(1, 80)}")
    if kind == "url":
        return SnakValue(kind="url", value=f"https://example.org/{rng.randint(1, 200)}")
    if kind == "time":
        return SnakValue(kind="time", value=f"+{rng.randint(1800, 2015)}-0{rng.randint(1, 9)}-1{rng.randint(0, 9)}T00:00:00Z")
    if kind == "quantity":
        return SnakValue(kind="quantity", value=str(rng.randint(1, 5000)))
    if kind == "external-id":
        return SnakValue(kind="external-id", value=f"x{rng.randint(1, 9999)}")
    return SnakValue(kind="string", value=rng.choice(_WORDS))


def random_statement(rng: random.Random, pid: str | None = None) -> Statement:
    qualifiers = tuple(
        (rng.choice(_PIDS), random_snak(rng)) for _ in range(rng.randint(0, 2))
    )
    references = tuple(
        tuple((rng.choice(_PIDS), random_snak(rng)) for _ in range(rng.randint(1, 2)))
        for _ in range(rng.randint(0, 2))
    )
    return Statement(
        property=pid or rng.choice(_PIDS),
        value=random_snak(rng),
        qualifiers=qualifiers,
        references=references,
        rank=rng.choice(("normal", "normal", "normal", "preferred", "deprecated")),
    )


def random_entity(rng: random.Random, item_id: str = "Q7", max_elems: int = 20) -> EntityRevision:
    """A random revision with at most max_elems entries per content section."""
    n = lambda: rng.randint(0, max_elems)  # noqa: E731
    labels = {lang: rng.choice(_WORDS) for lang in rng.sample(_LANGS, min(n(), len(_LANGS)))}
    descriptions = {lang: rng.choice(_WORDS) for lang in rng.sample(_LANGS, min(n(), len(_LANGS)))}
    aliases = {}
    for lang in rng.sample(_LANGS, rng.randint(0, 3)):
        pool = rng.sample(_WORDS, rng.randint(1, 4))
        aliases[lang] = tuple(pool)
    statements: dict[str, tuple[Statement, ...]] = {}
    for _ in range(n()):
        stmt = random_statement(rng)
        statements[stmt.property] = statements.get(stmt.property, ()) + (stmt,)
    sitelinks = {}
    for site in rng.sample(_SITES, min(n(), len(_SITES))):
        badges = tuple(rng.sample(_BADGES, rng.randint(0, 2)))
        sitelinks[site] = Sitelink(site=site, title=rng.choice(_WORDS).title(), badges=badges)
    return EntityRevision(
        item_id=item_id,
        labels=labels,
        descriptions=descriptions,
        aliases=aliases,
        statements=statements,
        sitelinks=sitelinks,
    )


def perturb_entity(rng: random.Random, rev: EntityRevision) -> EntityRevision:
    """A handful of small random edits; keeps pairs related so the changed
    paths of the differ actually run."""
    from dataclasses import replace

    out = rev
    for _ in range(rng.randint(1, 5)):
        roll = rng.random()
        if roll < 0.2:
            labels = dict(out.labels)
            labels[rng.choice(_LANGS)] = rng.choice(_WORDS)
            out = replace(out, labels=labels)
        elif roll < 0.35 and out.labels:
            labels = dict(out.labels)
            labels.pop(rng.choice(sorted(labels)))
            out = replace(out, labels=labels)
        elif roll < 0.55:
            stmt = random_statement(rng)
            statements = dict(out.statements)
            statements[stmt.property] = statements.get(stmt.property, ()) + (stmt,)
            out = replace(out, statements=statements)
        elif roll < 0.7 and out.statements:
            pid = rng.choice(sorted(out.statements))
            statements = dict(out.statements)
            remaining = statements[pid][1:]
            if remaining:
                statements[pid] = remaining
            else:
                statements.pop(pid)
            out = replace(out, statements=statements)
        elif roll < 0.85:
            site = rng.choice(_SITES)
            sitelinks = dict(out.sitelinks)
            sitelinks[site] = Sitelink(site=site, title=rng.choice(_WORDS).title())
            out = replace(out, sitelinks=sitelinks)
        else:
            aliases = dict(out.aliases)
            lang = rng.choice(_LANGS[:3])
            aliases[lang] = aliases.get(lang, ()) + (f"{rng.choice(_WORDS)}-{rng.randint(1, 99)}",)
            out = replace(out, aliases=aliases)
    return out


def make_user(
    name: str = "Editor",
    anonymous: bool = False,
    bot: bool = False,
    groups: tuple[str, ...] = (),
    registration: int | None = 1_000_000,
) -> UserInfo:
    return UserInfo(
        name=name,
        is_anonymous=anonymous,
        is_bot=bot,
        groups=frozenset(() if anonymous else groups),
        registration=None if anonymous else registration,
    )


def make_meta(rev_id: int, parent_rev_id: int = 0, user: UserInfo | None = None,
              comment: str = "", timestamp: int = 1_420_000_000) -> EditMeta:
    return EditMeta(
        rev_id=rev_id,
        parent_rev_id=parent_rev_id,
        user=user or make_user(),
        comment=comment,
        timestamp=timestamp,
    )


# ---------------------------------------------------------------------------
# Acceptance criterion reporting: one PASS/FAIL line per criterion at the end
# of the run, driven by the @pytest.mark.criterion("...") marker.
# ---------------------------------------------------------------------------

def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(name): acceptance criterion covered by this test"
    )
    config._criterion_results = {}


def pytest_collection_modifyitems(config, items):
    for item in items:
        marker = item.get_closest_marker("criterion")
        if marker is not None:
            config._criterion_results[item.nodeid] = (marker.args[0], None)


def pytest_runtest_logreport(report):
    # config is not reachable from the report; stash outcomes on the module.
    if report.when != "call":
        return
    _OUTCOMES[report.nodeid] = report.outcome


_OUTCOMES: dict[str, str] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    rows = []
    for nodeid, (name, _) in config._criterion_results.items():
        outcome = _OUTCOMES.get(nodeid, "skipped")
        rows.append((name, outcome))
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in rows:
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{verdict}] {name}")
