"""Corpus builder tests.

detect_reverted is validated against an all-pairs oracle that re-reads the
rule from the definition: a target is reverted when any later revision within
both bounds restores any state from strictly before the target.
"""
import random

import pytest

from vandal_sentinel.corpus import (
    CORPUS_FORMAT,
    CorpusRecord,
    RevertConfig,
    TRUSTED_GROUPS,
    apply_label_overrides,
    build_corpus,
    check_label_soundness,
    detect_reverted,
    is_trusted,
    parse_label_export,
    read_corpus,
    split_train_test,
    subsample,
    write_corpus,
)
from vandal_sentinel.entity import EntityRevision, serialize_entity
from vandal_sentinel.errors import AlreadySplit, DataError
from vandal_sentinel.ingestion import RevisionEnvelope

from conftest import make_meta, make_user


# ---------------------------------------------------------------------------
# Revert detection against the all-pairs oracle
# ---------------------------------------------------------------------------

def revert_oracle(hashes, timestamps, target, cfg):
    before = set(hashes[:target])
    for j in range(target + 1, len(hashes)):
        within_radius = (j - target) <= cfg.radius
        within_window = (timestamps[j] - timestamps[target]) <= cfg.window
        if within_radius and within_window and hashes[j] in before:
            return True
    return False


def random_history(rng, max_len=30):
    n = rng.randint(1, max_len)
    pool = [f"h{i}" for i in range(rng.randint(1, max(2, n // 2)))]
    hashes = [rng.choice(pool) for _ in range(n)]
    ts = 0
    timestamps = []
    for _ in range(n):
        ts += rng.choice((60, 3600, 86_400, 86_400 * 8, 86_400 * 20))
        timestamps.append(ts)
    return hashes, timestamps


class TestDetectReverted:
    def test_matches_oracle_on_random_histories(self):
        rng = random.Random(6120)
        cfg = RevertConfig(radius=rng.randint(1, 6), window=86_400 * 15)
        for _ in range(200):
            hashes, timestamps = random_history(rng)
            for target in range(len(hashes)):
                got = detect_reverted(hashes, target, cfg, timestamps)
                assert got == revert_oracle(hashes, timestamps, target, cfg), (hashes, target)

    def test_spec_triplet_examples(self):
        cfg = RevertConfig()
        ts = [0, 3600, 7200]
        assert detect_reverted(["A", "B", "A"], 1, cfg, ts) is True
        for target in range(3):
            assert detect_reverted(["A", "B", "C"], target, cfg, ts) is False

    def test_restoration_outside_window_does_not_count(self):
        cfg = RevertConfig(window=30 * 86_400)
        ts = [0, 3600, 3600 + 31 * 86_400]
        assert detect_reverted(["A", "B", "A"], 1, cfg, ts) is False

    def test_window_boundary_is_inclusive(self):
        cfg = RevertConfig(window=30 * 86_400)
        ts = [0, 3600, 3600 + 30 * 86_400]
        assert detect_reverted(["A", "B", "A"], 1, cfg, ts) is True
        ts_late = [0, 3600, 3600 + 30 * 86_400 + 1]
        assert detect_reverted(["A", "B", "A"], 1, cfg, ts_late) is False

    def test_radius_boundary_is_inclusive(self):
        cfg = RevertConfig(radius=3, window=10**9)
        hashes = ["A", "B", "x1", "x2", "A"]
        ts = list(range(0, 500, 100))
        assert detect_reverted(hashes, 1, cfg, ts) is True  # j - i == 3
        hashes = ["A", "B", "x1", "x2", "x3", "A"]
        ts = list(range(0, 600, 100))
        assert detect_reverted(hashes, 1, cfg, ts) is False  # j - i == 4

    def test_first_revision_never_reverted(self):
        cfg = RevertConfig()
        assert detect_reverted(["A", "A"], 0, cfg, [0, 60]) is False

    def test_out_of_range_target_rejected(self):
        with pytest.raises(IndexError):
            detect_reverted(["A"], 3, RevertConfig(), [0])


# ---------------------------------------------------------------------------
# Corpus building over a hand-made fixture
# ---------------------------------------------------------------------------

def entity_json(item_id, label):
    return serialize_entity(EntityRevision(item_id=item_id, labels={"en": label}))


def envelope(rev_id, parent_rev_id, item_id, label, parent_label, user, comment, ts):
    return RevisionEnvelope(
        meta=make_meta(rev_id, parent_rev_id, user, comment=comment, timestamp=ts),
        child_json=entity_json(item_id, label),
        parent_json=None if parent_rev_id == 0 else entity_json(item_id, parent_label),
    )


PATROLLER = make_user("Patroller", groups=("rollbacker",))
SYSOP = make_user("Admin", groups=("sysop",))
PLAIN = make_user("Editor", registration=1_000)
ANON = make_user("4.5.6.7", anonymous=True)
BOT = make_user("TaskBot", bot=True, groups=("bot",))


def fixture_envelopes():
    """One item: create, vandalize, roll back, client edit, trusted edit that
    itself gets reverted, and one bot save in the middle."""
    t = 1_420_000_000
    rows = [
        # rev, parent, label, parent_label, user, comment
        (101, 0, "start", None, PLAIN, "/* wbeditentity-create:2|en */ start"),
        (102, 101, "junk", "start", ANON, "improved"),
        (103, 102, "start", "junk", PATROLLER, "Reverted edits by 4.5.6.7"),
        (104, 103, "clienty", "start", PLAIN, "/* clientsitelink-update:0|enwiki */ moved"),
        (105, 104, "bot-touch", "clienty", BOT, "/* wbsetlabel-add:1|de */ bot job"),
        (106, 105, "sysop-edit", "bot-touch", SYSOP, "tweak"),
        (107, 106, "bot-touch", "sysop-edit", PLAIN, "undo accidental change"),
    ]
    return [
        envelope(rev, parent, "Q70", lab, plab, user, comment, t + i * 3600)
        for i, (rev, parent, lab, plab, user, comment) in enumerate(rows)
    ]


class TestBuildCorpus:
    def test_labels_trust_kinds_and_bot_exclusion(self):
        records, summary = build_corpus(fixture_envelopes())
        by_rev = {r.rev_id: r for r in records}
        assert 105 not in by_rev  # the bot edit is no sample row
        assert summary.bots_excluded == 1

        assert by_rev[102].reverted and by_rev[102].user_trust == "non_trusted"
        assert by_rev[102].edit_kind == "regular"
        assert by_rev[102].label is True

        assert by_rev[103].edit_kind == "revertish"
        assert by_rev[103].label is False

        assert by_rev[104].edit_kind == "client"

        # the sysop edit is reverted by 107 restoring the bot state,
        # but trusted users never produce vandalism labels
        assert by_rev[106].reverted is True
        assert by_rev[106].user_trust == "trusted"
        assert by_rev[106].label is False

    def test_summary_cells_sum_to_total(self):
        records, summary = build_corpus(fixture_envelopes())
        assert sum(edits for edits, _, _ in summary.cells.values()) == summary.total == len(records)
        labeled = sum(lab for _, _, lab in summary.cells.values())
        assert labeled == sum(1 for r in records if r.label)

    def test_bot_revisions_still_serve_revert_detection(self):
        # 107 restores the bot's content state; without the bot revision in
        # the history the sysop edit would never be flagged reverted.
        records, _ = build_corpus(fixture_envelopes())
        by_rev = {r.rev_id: r for r in records}
        assert by_rev[106].reverted is True

    def test_incomplete_tail_is_flagged_not_dropped(self):
        records, summary = build_corpus(fixture_envelopes())
        tail = [r for r in records if r.incomplete_history]
        assert tail, "stream ends within the window, the tail cannot be ruled out"
        assert all(not r.reverted for r in tail)
        assert summary.incomplete == len(tail)

    def test_records_sorted_by_rev_id(self):
        records, _ = build_corpus(fixture_envelopes())
        ids = [r.rev_id for r in records]
        assert ids == sorted(ids)

    def test_trusted_group_list(self):
        assert is_trusted(["sysop"])
        assert is_trusted(["rollbacker", "autoconfirmed"])
        assert not is_trusted(["autoconfirmed"])
        assert not is_trusted([])
        assert "flood" in TRUSTED_GROUPS and len(TRUSTED_GROUPS) == 10


class TestRecordInvariant:
    def test_auto_label_must_satisfy_conjunction(self):
        with pytest.raises(ValueError):
            CorpusRecord(
                rev_id=1, item_id="Q1", timestamp=0,
                user_trust="trusted", edit_kind="regular",
                reverted=True, label=True,
            )
        with pytest.raises(ValueError):
            CorpusRecord(
                rev_id=1, item_id="Q1", timestamp=0,
                user_trust="non_trusted", edit_kind="client",
                reverted=True, label=True,
            )

    def test_human_label_may_override(self):
        rec = CorpusRecord(
            rev_id=1, item_id="Q1", timestamp=0,
            user_trust="non_trusted", edit_kind="regular",
            reverted=False, label=True, label_source="human",
        )
        check_label_soundness([rec])  # does not raise

    def test_soundness_checker_rejects_smuggled_auto_labels(self):
        rec = CorpusRecord(
            rev_id=1, item_id="Q1", timestamp=0,
            user_trust="non_trusted", edit_kind="regular",
            reverted=True, label=True,
        )
        object.__setattr__(rec, "reverted", False)
        with pytest.raises(DataError):
            check_label_soundness([rec])


class TestSplitAndSampling:
    def _records(self, n):
        return [
            CorpusRecord(
                rev_id=i + 1, item_id=f"Q{(i % 7) + 1}", timestamp=i,
                user_trust="non_trusted", edit_kind="regular",
                reverted=False, label=False,
            )
            for i in range(n)
        ]

    def test_floor_rule_10_records(self):
        records = split_train_test(self._records(10), ratio=0.8, seed=3)
        assert sum(1 for r in records if r.split == "train") == 8
        assert sum(1 for r in records if r.split == "test") == 2

    def test_split_is_deterministic(self):
        a = split_train_test(self._records(50), ratio=0.8, seed=9)
        b = split_train_test(self._records(50), ratio=0.8, seed=9)
        assert [r.split for r in a] == [r.split for r in b]
        c = split_train_test(self._records(50), ratio=0.8, seed=10)
        assert [r.split for r in c] != [r.split for r in a]

    def test_double_split_rejected(self):
        records = split_train_test(self._records(10), ratio=0.8, seed=1)
        with pytest.raises(AlreadySplit):
            split_train_test(records, ratio=0.8, seed=1)

    def test_subsample_edits(self):
        sample = subsample(self._records(40), 12, mode="edits", seed=4)
        assert len(sample) == 12
        assert len({r.rev_id for r in sample}) == 12

    def test_subsample_items_keeps_whole_items(self):
        records = self._records(40)
        sample = subsample(records, 12, mode="items", seed=4)
        assert len(sample) == 12
        full = {r.item_id for r in records}
        per_item = {item: sum(1 for r in records if r.item_id == item) for item in full}
        got = {item: sum(1 for r in sample if r.item_id == item) for item in {s.item_id for s in sample}}
        # whole items are taken in turn; only the item that crosses the budget
        # may arrive truncated
        partial = [item for item, count in got.items() if count != per_item[item]]
        assert len(partial) <= 1

    def test_subsample_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            subsample(self._records(5), 2, mode="pages", seed=0)


class TestCorpusFile:
    def test_round_trip_and_idempotence(self, tmp_path):
        records, _ = build_corpus(fixture_envelopes())
        records = split_train_test(records, ratio=0.5, seed=1)
        path_a = tmp_path / "a.jsonl"
        path_b = tmp_path / "b.jsonl"
        write_corpus(path_a, records)
        write_corpus(path_b, records)
        assert path_a.read_bytes() == path_b.read_bytes()

        header, back = read_corpus(path_a)
        assert header["corpus_format"] == CORPUS_FORMAT
        assert header["n_records"] == len(records)
        assert [r.to_json_dict() for r in back] == [r.to_json_dict() for r in records]

    def test_read_rejects_foreign_format(self, tmp_path):
        records, _ = build_corpus(fixture_envelopes())
        path = tmp_path / "c.jsonl"
        write_corpus(path, records)
        lines = path.read_text().splitlines()
        lines[0] = lines[0].replace(CORPUS_FORMAT, "vs-corpus-99")
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(DataError):
            read_corpus(path)

    def test_features_survive_the_file(self, tmp_path):
        records, _ = build_corpus(fixture_envelopes())
        path = tmp_path / "d.jsonl"
        write_corpus(path, records)
        _, back = read_corpus(path)
        assert back[0].features is not None
        assert len(back[0].features.values) == 53
        assert back[0].features == records[0].features


class TestLabelOverrides:
    def test_parse_latest_wins(self):
        lines = [
            '{"rev_id": 102, "class": "good", "reviewer": "ann"}',
            '{"rev_id": 102, "class": "vandalism", "reviewer": "ben"}',
        ]
        assert parse_label_export(lines) == {102: "vandalism"}

    def test_unknown_class_rejected(self):
        with pytest.raises(DataError):
            parse_label_export(['{"rev_id": 1, "class": "meh"}'])

    def test_missing_field_is_a_schema_error(self):
        with pytest.raises(DataError):
            parse_label_export(['{"rev_id": 1}'])

    def test_overrides_rewrite_labels_and_source(self):
        records, _ = build_corpus(fixture_envelopes())
        by_rev = {r.rev_id: r for r in records}
        assert by_rev[104].label is False
        updated = apply_label_overrides(records, {104: "vandalism", 102: "good"})
        by_rev = {r.rev_id: r for r in updated}
        assert by_rev[104].label is True and by_rev[104].label_source == "human"
        assert by_rev[102].label is False and by_rev[102].label_source == "human"
        check_label_soundness(updated)

    def test_goodfaith_damaging_collapses_to_not_vandalism(self):
        records, _ = build_corpus(fixture_envelopes())
        updated = apply_label_overrides(records, {102: "goodfaith_damaging"})
        by_rev = {r.rev_id: r for r in updated}
        assert by_rev[102].label is False
