import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aspectgen.corpus import (Item, dataset_hash, empirical_ctr, load_dataset, split_by_engagement,
                              write_dataset)
from aspectgen.errors import (ClicksExceedImpressions, DataError, DuplicateId, MalformedRecord,
                              TooFewItems)
from aspectgen.pipeline import bundled_corpus_path
from aspectgen.synthetic import generate_items


def write_lines(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return str(path)


def rec(item_id="a", clicks=3, impressions=10, **kw):
    r = dict(item_id=item_id, title="t", description="x", clicks=clicks, impressions=impressions)
    r.update(kw)
    return r


def items_with_ctrs(ctrs):
    return [Item(f"i{k}", "t", "", int(round(c * 100)), 100) for k, c in enumerate(ctrs)]


def test_empty_file_gives_empty_list(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("")
    assert load_dataset(str(p)) == []


def test_single_record(tmp_path):
    (item,) = load_dataset(write_lines(tmp_path / "a.jsonl", [rec()]))
    assert item.item_id == "a"
    assert item.ctr == pytest.approx(0.3, abs=0)


def test_clicks_over_impressions_rejected(tmp_path):
    with pytest.raises(ClicksExceedImpressions):
        load_dataset(write_lines(tmp_path / "a.jsonl", [rec(clicks=11, impressions=10)]))


def test_duplicate_id_rejected(tmp_path):
    with pytest.raises(DuplicateId):
        load_dataset(write_lines(tmp_path / "a.jsonl", [rec(), rec()]))


@pytest.mark.parametrize("line", ["{not json", "[1, 2]", json.dumps(rec(clicks="3")),
                                  json.dumps({"item_id": "a", "title": "t"})])
def test_malformed_lines_report_line_number(tmp_path, line):
    p = tmp_path / "bad.jsonl"
    p.write_text(json.dumps(rec(item_id="ok")) + "\n\n" + line + "\n")
    with pytest.raises(MalformedRecord) as err:
        load_dataset(str(p))
    assert err.value.line_no == 3


def test_missing_file_names_path(tmp_path):
    missing = str(tmp_path / "nope.jsonl")
    with pytest.raises(DataError, match="nope.jsonl"):
        load_dataset(missing)


def test_empty_descriptions_are_kept_and_flagged(tmp_path):
    items = load_dataset(write_lines(tmp_path / "a.jsonl", [rec("a", description=""),
                                                            rec("b", description="words")]))
    assert [it.lackluster for it in items] == [True, False]


def test_write_then_load_round_trip(tmp_path):
    items = generate_items(12, seed=3)
    path = str(tmp_path / "c.jsonl")
    write_dataset(items, path)
    assert load_dataset(path) == items
    assert dataset_hash(load_dataset(path)) == dataset_hash(items)


@pytest.mark.parametrize("clicks,impressions,expected", [(0, 5, 0.0), (7, 7, 1.0), (42, 100, 0.42)])
def test_empirical_ctr(clicks, impressions, expected):
    assert empirical_ctr(Item("x", "t", "", clicks, impressions)) == expected


def test_median_split_example():
    s = split_by_engagement(items_with_ctrs([0.9, 0.7, 0.2, 0.1]))
    assert sorted(it.ctr for it in s.train) == [0.7, 0.9]
    assert sorted(it.ctr for it in s.test) == [0.1, 0.2]
    assert s.median_ctr == pytest.approx(0.45)


def test_odd_count_rounds_train_up_and_breaks_ties_by_id():
    items = [Item("b", "t", "", 5, 10), Item("a", "t", "", 5, 10), Item("c", "t", "", 1, 10)]
    s = split_by_engagement(items)
    assert [it.item_id for it in s.train] == ["a", "b"]
    assert [it.item_id for it in s.test] == ["c"]


def test_too_few_items():
    with pytest.raises(TooFewItems):
        split_by_engagement(items_with_ctrs([0.5]))


item_lists = st.lists(
    st.tuples(st.integers(0, 50), st.integers(1, 50)).map(lambda t: (min(t), max(t))),
    min_size=2, max_size=40,
).map(lambda pairs: [Item(f"id{k:03d}", "t", "", c, n) for k, (c, n) in enumerate(pairs)])


@settings(max_examples=100, deadline=None)
@given(item_lists, st.randoms(use_true_random=False))
def test_split_partition_and_order_invariance(items, rnd):
    s = split_by_engagement(items)
    train_ids = {it.item_id for it in s.train}
    test_ids = {it.item_id for it in s.test}
    assert len(s.train) + len(s.test) == len(items)
    assert not train_ids & test_ids
    shuffled = list(items)
    rnd.shuffle(shuffled)
    assert split_by_engagement(shuffled) == s


@settings(max_examples=100, deadline=None)
@given(item_lists)
def test_train_ctrs_dominate_test_ctrs(items):
    s = split_by_engagement(items)
    assert min(it.ctr for it in s.train) >= max(it.ctr for it in s.test)


def test_bundled_corpus_matches_generator():
    items = load_dataset(bundled_corpus_path())
    assert len(items) >= 200
    assert items == generate_items()
    assert any(it.lackluster for it in items)
