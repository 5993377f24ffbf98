import json

import pytest

from countforge.core import AnnotationSet, CountRange
from countforge.corpus import (
    build_baseline_corpus,
    build_crco_corpus,
    build_d3t_corpus,
    build_single_round_corpus,
    read_corpus,
    write_corpus,
)
from countforge.dialogue import D3TConfig, SingleRoundConfig
from countforge.errors import CountOutsideRange
from countforge.ranking import CrcoConfig, CrcoMode

from conftest import record


def test_baseline_corpus_shape(tiny_set):
    samples = build_baseline_corpus(tiny_set, fingerprint="fp")
    assert len(samples) == len(tiny_set)
    sample = samples[0]
    assert sample.meta["task"] == "baseline"
    assert sample.meta["fingerprint"] == "fp"
    assert len(sample.conversations) == 2
    assert sample.conversations[0]["from"] == "human"
    assert sample.conversations[1]["from"] == "gpt"


def test_d3t_corpus_alternates_roles(tiny_set):
    samples = build_d3t_corpus(tiny_set, D3TConfig(), "fp")
    for sample in samples:
        roles = [turn["from"] for turn in sample.conversations]
        assert roles == ["human", "gpt"] * (len(roles) // 2)


def test_d3t_corpus_fails_loudly_on_bad_count():
    annotations = AnnotationSet(records=(record("x", "cars", 9000),))
    with pytest.raises(CountOutsideRange):
        build_d3t_corpus(annotations, D3TConfig(), "fp")


def test_d3t_per_category_range(tiny_set):
    cfg = D3TConfig(per_category_range=True)
    samples = build_d3t_corpus(tiny_set, cfg, "fp")
    by_id = {s.meta["image_id"]: s for s in samples}
    # cars has a single record (count 12): degenerate range, no probes.
    assert len(by_id["c1"].conversations) == 2


def test_single_round_corpus(tiny_set):
    cfg = SingleRoundConfig(interval=100, initial_range=CountRange(1, 500))
    samples = build_single_round_corpus(tiny_set, cfg, "fp")
    by_id = {s.meta["image_id"]: s for s in samples}
    assert by_id["a2"].conversations[1]["value"] == "[1,100]"
    assert by_id["a3"].conversations[1]["value"] == "[401,500]"


def test_crco_corpus_skips_thin_categories(spread_set, tiny_set, caplog):
    cfg = CrcoConfig(k=4, mode=CrcoMode.STRATIFIED, seed=1, sets_per_category=2)
    samples = build_crco_corpus(spread_set, cfg, "fp")
    assert len(samples) == 2  # one category, two sets
    # tiny_set's cars category has one record; it is skipped, not fatal.
    samples = build_crco_corpus(tiny_set, cfg, "fp")
    assert all(s.meta["category_scope"] != "cars" for s in samples)


def test_crco_corpus_images_in_presented_order(spread_set):
    cfg = CrcoConfig(k=4, mode=CrcoMode.STRATIFIED, seed=5)
    (sample,) = build_crco_corpus(spread_set, cfg, "fp")
    members = {m["image_id"]: m["count"] for m in sample.meta["members"]}
    permutation = sample.meta["permutation"]
    ordered_ids = [m["image_id"] for m in sample.meta["members"]]
    expected_paths = [f"{ordered_ids[p - 1]}.jpg" for p in permutation]
    assert list(sample.images) == expected_paths
    assert len(members) == 4


def test_corpus_file_round_trip(tmp_path, tiny_set):
    samples = build_baseline_corpus(tiny_set, "fp")
    path = tmp_path / "corpus.json"
    write_corpus(samples, path)
    loaded = read_corpus(path)
    assert [s.id for s in loaded] == [s.id for s in samples]
    payload = json.loads(path.read_text())
    assert isinstance(payload, list) and payload[0]["meta"]["task"] == "baseline"
