import random
from dataclasses import replace

import pytest

from vandal_sentinel.entity import (
    EntityRevision,
    Sitelink,
    SnakValue,
    Statement,
    UserInfo,
    canonical_hash,
    parse_entity,
    serialize_entity,
    statement_key,
)
from vandal_sentinel.errors import MalformedJson, SchemaViolation

from conftest import random_entity


class TestRoundTrip:
    def test_serialize_parse_identity_over_random_entities(self):
        rng = random.Random(31)
        for _ in range(200):
            rev = random_entity(rng, item_id=f"Q{rng.randint(1, 500)}")
            back = parse_entity(serialize_entity(rev))
            assert back.item_id == rev.item_id
            assert back.labels == rev.labels
            assert back.descriptions == rev.descriptions
            assert back.aliases == rev.aliases
            assert back.sitelinks == rev.sitelinks
            assert {p: tuple(map(statement_key, s)) for p, s in back.statements.items()} == {
                p: tuple(map(statement_key, s)) for p, s in rev.statements.items()
            }
            assert canonical_hash(back) == canonical_hash(rev)

    def test_serialization_is_byte_stable(self):
        rng = random.Random(77)
        rev = random_entity(rng)
        text = serialize_entity(rev)
        assert serialize_entity(parse_entity(text)) == text

    def test_empty_entity_round_trips(self):
        rev = EntityRevision(item_id="Q1")
        assert parse_entity(serialize_entity(rev)).item_id == "Q1"


class TestCanonicalHash:
    def test_rev_id_and_timestamp_do_not_contribute(self):
        rng = random.Random(5)
        rev = random_entity(rng)
        assert canonical_hash(replace(rev, rev_id=9, timestamp=123)) == canonical_hash(rev)

    def test_statement_order_within_property_is_irrelevant(self):
        a = Statement(property="P31", value=SnakValue(kind="item", value="Q5"))
        b = Statement(property="P31", value=SnakValue(kind="item", value="Q42"))
        fwd = EntityRevision(item_id="Q1", statements={"P31": (a, b)})
        rev = EntityRevision(item_id="Q1", statements={"P31": (b, a)})
        assert canonical_hash(fwd) == canonical_hash(rev)

    def test_alias_order_within_language_is_irrelevant(self):
        fwd = EntityRevision(item_id="Q1", aliases={"en": ("x", "y")})
        bwd = EntityRevision(item_id="Q1", aliases={"en": ("y", "x")})
        assert canonical_hash(fwd) == canonical_hash(bwd)

    def test_content_difference_changes_hash(self):
        base = EntityRevision(item_id="Q1", labels={"en": "apple"})
        other = EntityRevision(item_id="Q1", labels={"en": "orange"})
        assert canonical_hash(base) != canonical_hash(other)

    def test_qualifier_and_reference_order_irrelevant_in_statement_key(self):
        q1 = ("P585", SnakValue(kind="time", value="+2001-01-01T00:00:00Z"))
        q2 = ("P31", SnakValue(kind="item", value="Q5"))
        s_fwd = Statement(property="P39", value=SnakValue(kind="string", value="v"), qualifiers=(q1, q2))
        s_bwd = Statement(property="P39", value=SnakValue(kind="string", value="v"), qualifiers=(q2, q1))
        assert statement_key(s_fwd) == statement_key(s_bwd)

    def test_rank_distinguishes_statements(self):
        s_n = Statement(property="P39", value=SnakValue(kind="string", value="v"), rank="normal")
        s_p = Statement(property="P39", value=SnakValue(kind="string", value="v"), rank="preferred")
        assert statement_key(s_n) != statement_key(s_p)


class TestValidation:
    def test_malformed_json_raises(self):
        with pytest.raises(MalformedJson):
            parse_entity("{not json")

    def test_schema_violation_carries_a_path(self):
        with pytest.raises(SchemaViolation):
            parse_entity('{"labels": {}}')  # no id

    def test_bad_item_id_rejected(self):
        with pytest.raises(ValueError):
            EntityRevision(item_id="item7")

    def test_snak_value_kinds_validated(self):
        with pytest.raises(ValueError):
            SnakValue(kind="widget", value="x")
        with pytest.raises(ValueError):
            SnakValue(kind="item", value="P31")
        with pytest.raises(ValueError):
            SnakValue(kind="url", value="not-a-url")

    def test_anonymous_user_cannot_have_groups(self):
        with pytest.raises(ValueError):
            UserInfo(name="1.2.3.4", is_anonymous=True, is_bot=False,
                     groups=frozenset({"sysop"}), registration=None)

    def test_duplicate_badges_rejected(self):
        with pytest.raises(ValueError):
            Sitelink(site="enwiki", title="X", badges=("Q1", "Q1"))
