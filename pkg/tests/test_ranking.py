import json
from fractions import Fraction

import numpy as np
import pytest

from countforge.core import AnnotationSet, category_count_extrema
from countforge.errors import (
    DegenerateCrop,
    EmptyCategory,
    InsufficientDiversity,
    UnknownCategory,
)
from countforge.ranking import (
    CrcoConfig,
    CrcoMode,
    RankingSet,
    _ascending_answer,
    assign_groups,
    build_scrco_set,
    bundled_grouping_path,
    load_grouping,
    rng_stream,
    sample_set,
)

from conftest import record


def oracle_group(count, lower, upper, k):
    """Brute-force interval membership in exact rational arithmetic."""
    if upper == lower:
        return 0
    width = Fraction(upper - lower, k)
    for i in range(k):
        left = lower + i * width
        right = lower + (i + 1) * width
        if i == k - 1:
            if left <= count <= upper:
                return i
        elif left <= count < right:
            return i
    raise AssertionError(f"count {count} missed every interval")


def oracle_answer(members, permutation):
    """Sort-based reconstruction of the expected ranking string."""
    presented = [(pos, members[p - 1]) for pos, p in enumerate(permutation, start=1)]
    ordered = sorted(presented, key=lambda item: item[1][1])
    return " < ".join(f"Image {pos}" for pos, _ in ordered)


class TestAssignGroups:
    def test_documented_quartile_example(self):
        annotations = AnnotationSet(
            records=(
                record("lo", "jars", 3),
                record("hi", "jars", 403),
                record("g0", "jars", 50),
                record("g1", "jars", 150),
                record("g2", "jars", 250),
                record("g3", "jars", 350),
            )
        )
        groups = assign_groups(annotations, "jars", 4)
        by_id = dict(zip(("lo", "hi", "g0", "g1", "g2", "g3"), groups))
        assert (by_id["g0"], by_id["g1"], by_id["g2"], by_id["g3"]) == (0, 1, 2, 3)
        assert by_id["lo"] == 0 and by_id["hi"] == 3

    def test_max_count_clamps_to_last_group(self, spread_set):
        records = spread_set.records_of("bottles")
        groups = assign_groups(spread_set, "bottles", 4)
        extrema = category_count_extrema(spread_set, "bottles")
        for rec, group in zip(records, groups):
            if rec.count == extrema.upper:
                assert group == 3

    def test_degenerate_extrema(self):
        annotations = AnnotationSet(
            records=tuple(record(f"e{i}", "eggs", 7) for i in range(5))
        )
        assert assign_groups(annotations, "eggs", 4) == [0] * 5

    def test_unknown_category(self, spread_set):
        with pytest.raises(UnknownCategory):
            assign_groups(spread_set, "nope", 4)

    def test_matches_brute_force_everywhere(self):
        rng = np.random.default_rng(99)
        counts = [int(c) for c in rng.integers(0, 500, size=120)]
        annotations = AnnotationSet(
            records=tuple(record(f"r{i}", "mixed", c) for i, c in enumerate(counts))
        )
        extrema = category_count_extrema(annotations, "mixed")
        for k in (2, 3, 4, 5, 7):
            groups = assign_groups(annotations, "mixed", k)
            for count, group in zip(counts, groups):
                assert group == oracle_group(count, extrema.lower, extrema.upper, k)

    def test_partition_tiles_span(self, spread_set):
        groups = assign_groups(spread_set, "bottles", 4)
        assert all(0 <= g <= 3 for g in groups)


class TestSampleSet:
    def test_worked_permutation_example(self):
        assert _ascending_answer((3, 1, 4, 2)) == "Image 2 < Image 4 < Image 1 < Image 3"

    def test_identity_permutation(self):
        assert _ascending_answer((1, 2, 3, 4)) == "Image 1 < Image 2 < Image 3 < Image 4"

    def test_stratified_counts_ascend_and_cover(self, spread_set):
        cfg = CrcoConfig(k=4, mode=CrcoMode.STRATIFIED, seed=5)
        rset = sample_set(spread_set, "bottles", cfg, rng_stream(5, "bottles", 0))
        counts = [c for _, c in rset.members]
        assert counts == sorted(counts) and len(set(counts)) == 4
        groups = dict(
            zip(
                (r.image_id for r in spread_set.records_of("bottles")),
                assign_groups(spread_set, "bottles", 4),
            )
        )
        sampled_groups = [groups[image_id] for image_id, _ in rset.members]
        assert sampled_groups[0] == 0 and sampled_groups[-1] == 3

    def test_answer_matches_sort_oracle_over_many_seeds(self, spread_set):
        cfg = CrcoConfig(k=4, mode=CrcoMode.STRATIFIED, seed=0)
        for i in range(500):
            rset = sample_set(spread_set, "bottles", cfg, rng_stream(0, "bottles", i))
            assert rset.answer == oracle_answer(rset.members, rset.permutation)
            assert sorted(rset.permutation) == [1, 2, 3, 4]

    def test_determinism(self, spread_set):
        cfg = CrcoConfig(k=4, mode=CrcoMode.STRATIFIED, seed=7)
        first = sample_set(spread_set, "bottles", cfg, rng_stream(7, "bottles", 3))
        second = sample_set(spread_set, "bottles", cfg, rng_stream(7, "bottles", 3))
        assert first == second

    def test_two_nonempty_groups_yield_pair(self):
        annotations = AnnotationSet(
            records=(
                record("a", "gaps", 1),
                record("b", "gaps", 2),
                record("c", "gaps", 400),
            )
        )
        cfg = CrcoConfig(k=4, mode=CrcoMode.STRATIFIED, seed=1)
        rset = sample_set(annotations, "gaps", cfg, rng_stream(1, "gaps", 0))
        assert len(rset.members) == 2
        assert rset.answer.count("<") == 1

    def test_single_group_insufficient(self):
        annotations = AnnotationSet(
            records=tuple(record(f"s{i}", "same", 9) for i in range(6))
        )
        cfg = CrcoConfig(k=4, mode=CrcoMode.STRATIFIED, seed=1)
        with pytest.raises(InsufficientDiversity):
            sample_set(annotations, "same", cfg, rng_stream(1, "same", 0))

    def test_empty_category(self, spread_set):
        cfg = CrcoConfig(k=4, mode=CrcoMode.STRATIFIED)
        with pytest.raises(EmptyCategory):
            sample_set(spread_set, "absent", cfg, rng_stream(0, "absent", 0))

    def test_random_mode_distinct_counts(self, spread_set):
        cfg = CrcoConfig(k=4, mode=CrcoMode.RANDOM, seed=3)
        rset = sample_set(spread_set, "bottles", cfg, rng_stream(3, "bottles", 0))
        counts = [c for _, c in rset.members]
        assert counts == sorted(counts) and len(set(counts)) == 4

    def test_random_mode_tie_shrink(self):
        # Two distinct counts available; ties force a shrunken set.
        annotations = AnnotationSet(
            records=(
                record("a", "twins", 5),
                record("b", "twins", 5),
                record("c", "twins", 9),
                record("d", "twins", 9),
            )
        )
        cfg = CrcoConfig(k=4, mode=CrcoMode.RANDOM, seed=2)
        rset = sample_set(annotations, "twins", cfg, rng_stream(2, "twins", 0))
        assert [c for _, c in rset.members] == [5, 9]

    def test_random_mode_all_tied(self):
        annotations = AnnotationSet(
            records=tuple(record(f"t{i}", "clones", 4) for i in range(4))
        )
        cfg = CrcoConfig(k=4, mode=CrcoMode.RANDOM, seed=2)
        with pytest.raises(InsufficientDiversity):
            sample_set(annotations, "clones", cfg, rng_stream(2, "clones", 0))

    def test_cross_category_pools_everything(self, tiny_set):
        cfg = CrcoConfig(k=3, mode=CrcoMode.CROSS_CATEGORY, seed=11)
        rset = sample_set(tiny_set, "apples", cfg, rng_stream(11, "apples", 0))
        assert rset.category_scope == "all"
        assert "counts of objects" in rset.question

    def test_semi_cross_uses_group_pool(self, tiny_set):
        grouping = {"fruit": ["apples", "oranges"], "vehicles": ["cars"]}
        cfg = CrcoConfig(
            k=3, mode=CrcoMode.SEMI_CROSS, grouping_file="unused.json", seed=4
        )
        rset = sample_set(
            tiny_set, "apples", cfg, rng_stream(4, "apples", 0), grouping=grouping
        )
        assert rset.category_scope == "fruit"
        fruit_ids = {"a1", "a2", "a3", "o1", "o2"}
        assert all(image_id in fruit_ids for image_id, _ in rset.members)

    def test_semi_cross_category_not_grouped(self, tiny_set):
        grouping = {"vehicles": ["cars"]}
        cfg = CrcoConfig(
            k=2, mode=CrcoMode.SEMI_CROSS, grouping_file="unused.json", seed=4
        )
        with pytest.raises(UnknownCategory):
            sample_set(
                tiny_set, "apples", cfg, rng_stream(4, "apples", 0), grouping=grouping
            )

    def test_semi_cross_requires_grouping_file(self):
        with pytest.raises(ValueError):
            CrcoConfig(mode=CrcoMode.SEMI_CROSS)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            CrcoConfig(k=1)


class TestScrco:
    def test_crop_sizes_for_default_fractions(self):
        rec = record("big", "tiles", 50, width=1000, height=800)
        rset = build_scrco_set(rec)
        sizes = [(t.w, t.h) for t in rset.crops]
        assert sizes == [(250, 200), (500, 400), (750, 600), (1000, 800)]

    def test_ascending_lists_smallest_crop_first(self):
        rec = record("big", "tiles", 50, width=1000, height=800)
        rset = build_scrco_set(rec)
        assert rset.members[0][0].endswith("#frac=0.25")
        assert rset.members[-1][0].endswith("#frac=1")
        assert [c for _, c in rset.members] == [1, 2, 3, 4]
        # Identity presentation without an rng.
        assert rset.permutation == (1, 2, 3, 4)
        assert rset.answer == "Image 1 < Image 2 < Image 3 < Image 4"

    def test_shuffled_answer_matches_oracle(self):
        rec = record("big", "tiles", 50, width=1000, height=800)
        rset = build_scrco_set(rec, rng=rng_stream(9, "scrco", "big"))
        assert rset.answer == oracle_answer(rset.members, rset.permutation)

    def test_subpixel_crop_rejected(self):
        rec = record("tiny", "dots", 1, width=3, height=3)
        with pytest.raises(DegenerateCrop):
            build_scrco_set(rec, fractions=(1.0, 0.25))

    def test_fraction_validation(self):
        rec = record("big", "tiles", 50, width=100, height=100)
        with pytest.raises(ValueError):
            build_scrco_set(rec, fractions=(0.25, 0.5))
        with pytest.raises(ValueError):
            build_scrco_set(rec, fractions=(1.5, 0.5))


class TestRankingSetInvariants:
    def test_rejects_non_ascending_members(self):
        with pytest.raises(ValueError):
            RankingSet(
                members=(("a", 5), ("b", 5)),
                permutation=(1, 2),
                question="q",
                answer="a",
                category_scope="s",
            )

    def test_rejects_bad_permutation(self):
        with pytest.raises(ValueError):
            RankingSet(
                members=(("a", 1), ("b", 2)),
                permutation=(1, 1),
                question="q",
                answer="a",
                category_scope="s",
            )


def test_load_grouping(tmp_path):
    path = tmp_path / "groups.json"
    path.write_text(json.dumps({"fruit": ["apples", "oranges"]}), encoding="utf-8")
    assert load_grouping(path) == {"fruit": ["apples", "oranges"]}
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"fruit": "apples"}), encoding="utf-8")
    with pytest.raises(ValueError):
        load_grouping(bad)


def test_bundled_grouping_fixture():
    grouping = load_grouping(bundled_grouping_path())
    assert len(grouping) == 10
    categories = [cat for cats in grouping.values() for cat in cats]
    assert len(categories) == 89
    assert len(set(categories)) == 89  # no category in two groups
    assert "oranges" in grouping["Fruits and Vegetables"]


def test_rng_stream_stability():
    a = rng_stream(7, "cat", 0).integers(0, 10**9)
    b = rng_stream(7, "cat", 0).integers(0, 10**9)
    c = rng_stream(7, "cat", 1).integers(0, 10**9)
    assert a == b
    assert a != c
