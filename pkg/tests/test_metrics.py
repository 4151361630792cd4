import math

import pytest
from hypothesis import given, strategies as st

from uavloc.errors import ConfigError, DataError
from uavloc.geo import GeoPoint
from uavloc.metrics import (
    QueryTruth,
    SdmConfig,
    UndefinedAPError,
    average_precision,
    evaluate,
    indicator,
    recall_at_k,
    recall_top1pct,
    sdm_from_distances,
    sdm_k,
    top1pct_k,
    write_report,
)
from uavloc.retrieval import RankedEntry, RankedList

TRUTH = GeoPoint(30.0, 120.0)


def ranked(classes, geos=None, qid="q"):
    geos = geos or [TRUTH] * len(classes)
    return RankedList(qid, [RankedEntry(f"g{i}", float(i), g, c) for i, (c, g) in enumerate(zip(classes, geos))])


def sdm_direct(ds, s):
    """Rank-weighted score written out term by term: sum (K-i+1)/e^(s d_i) over sum (K-i+1)."""
    K = len(ds)
    num = 0.0
    den = 0.0
    for i in range(1, K + 1):
        num += (K - i + 1) / math.exp(s * ds[i - 1])
        den += K - i + 1
    return num / den


def test_indicator():
    assert indicator("c7", "c7") == 1
    assert indicator("c7", "c8") == 0


@given(st.text(min_size=1), st.text(min_size=1))
def test_indicator_is_equality(a, b):
    assert indicator(a, b) == int(a == b)


def test_recall_examples():
    assert recall_at_k(ranked(["t", "x"]), "t", 1) == 1
    rl = ranked(["x", "y", "t", "z"])
    assert recall_at_k(rl, "t", 1) == 0
    assert recall_at_k(rl, "t", 2) == 0
    assert recall_at_k(rl, "t", 3) == 1
    with pytest.raises(ConfigError):
        recall_at_k(rl, "t", 0)
    with pytest.raises(DataError):
        recall_at_k(ranked([]), "t", 1)


def test_top1pct():
    assert top1pct_k(9099) == 91
    assert top1pct_k(100) == 1
    assert top1pct_k(50) == 1
    rl = ranked(["x", "t"])
    assert recall_top1pct(rl, "t", 100) == recall_at_k(rl, "t", 1) == 0
    assert recall_top1pct(rl, "t", 200) == 1


def test_ap_examples():
    assert average_precision(ranked(["t", "t", "t", "x"]), "t") == 1.0
    assert average_precision(ranked(["x", "t", "y"]), "t") == 0.5
    # two of three relevant items retrieved, third missing from a truncated list
    assert average_precision(ranked(["t", "x", "t"]), "t", n_relevant=3) == pytest.approx((1 + 2 / 3) / 3)
    with pytest.raises(UndefinedAPError):
        average_precision(ranked(["x", "y"]), "t")


def test_sdm_example():
    geos = [TRUTH, GeoPoint(30.0, 120.0001), GeoPoint(30.0, 120.0002)]
    value = sdm_k(ranked(["a", "b", "c"], geos), TRUTH, 3, 5e3)
    expected = (3 * 1 + 2 * math.exp(-0.5) + 1 * math.exp(-1)) / 6
    assert value == pytest.approx(expected, abs=1e-9)
    assert value == pytest.approx(0.76349, abs=1e-5)


def test_sdm_trivial_cases():
    assert sdm_k(ranked(["a"] * 5), TRUTH, 5) == 1.0
    near = GeoPoint(30.0, 120.00001)
    assert sdm_k(ranked(["a"], [near]), TRUTH, 1) == pytest.approx(math.exp(-5e3 * (120.00001 - 120.0)), rel=1e-12)
    assert sdm_k(ranked(["a"]), TRUTH, 1) == 1.0
    with pytest.raises(DataError):
        sdm_k(ranked(["a", "b"]), TRUTH, 3)
    with pytest.raises(ConfigError):
        SdmConfig((1,), s=0)


def test_weight_normalization_symbolic():
    for k in range(1, 101):
        assert sum(k - i + 1 for i in range(1, k + 1)) == k * (k + 1) // 2
        assert sdm_from_distances([0.0] * k) == 1.0


dists = st.lists(st.floats(0, 1e-3), min_size=1, max_size=12)


@given(dists)
def test_sdm_matches_direct_and_is_in_unit_interval(ds):
    v = sdm_from_distances(ds)
    assert v == pytest.approx(sdm_direct(ds, 5e3), rel=1e-12)
    assert 0 < v <= 1
    if all(d == 0 for d in ds):
        assert v == 1
    if max(ds) >= 1e-9:
        assert v < 1


@given(dists, st.data())
def test_sdm_strictly_decreasing_in_each_distance(ds, data):
    i = data.draw(st.integers(0, len(ds) - 1))
    bump = data.draw(st.floats(1e-6, 1e-3))
    worse = list(ds)
    worse[i] += bump
    assert sdm_from_distances(worse) < sdm_from_distances(ds)


@given(st.lists(st.sampled_from("abc"), min_size=1, max_size=15))
def test_recall_nondecreasing_in_k(classes):
    rl = ranked(classes)
    values = [recall_at_k(rl, "a", k) for k in range(1, len(classes) + 2)]
    assert values == sorted(values)


def test_near_miss_scores_zero_recall_but_high_sdm():
    near_miss = ranked(["neighbor_class"], [GeoPoint(30.0, 120.00001)])
    assert recall_at_k(near_miss, "true_class", 1) == 0
    assert sdm_k(near_miss, TRUTH, 1) == pytest.approx(math.exp(-0.05), abs=1e-6)
    assert sdm_k(near_miss, TRUTH, 1) >= 0.95


def _sdm_not_monotone_in_k():
    # rank 1 far, rank 2 at the truth: SDM_2 > SDM_1
    rl = ranked(["x", "t"], [GeoPoint(30.0, 120.001), TRUTH])
    return sdm_k(rl, TRUTH, 1), sdm_k(rl, TRUTH, 2)


def test_sdm_is_not_necessarily_monotone_in_k():
    s1, s2 = _sdm_not_monotone_in_k()
    assert s2 > s1


def test_evaluate_aggregates(tmp_path):
    lists = [
        ranked(["t", "x", "t"], qid="q2"),
        ranked(["x", "t", "y"], [GeoPoint(30.0, 120.0001), TRUTH, TRUTH], qid="q1"),
    ]
    truths = {"q1": QueryTruth("t", TRUTH, 1), "q2": QueryTruth("t", TRUTH, 2)}
    rep = evaluate(lists, truths, SdmConfig((1, 2)), gallery_size=300)
    assert [q.query_id for q in rep.queries] == ["q1", "q2"]
    assert rep.recall == {1: 0.5, 2: 1.0}
    assert rep.recall_top1pct == 1.0
    assert rep.mean_ap == pytest.approx((0.5 + (1 + 2 / 3) / 2) / 2)
    assert rep.mean_sdm[1] == pytest.approx((math.exp(-0.5) + 1) / 2)
    assert rep.queries[0].hit_rank == 2
    write_report(rep, tmp_path / "r.jsonl")
    lines = (tmp_path / "r.jsonl").read_text().splitlines()
    assert '"gallery_size": 300' in lines[0] and '"s": 5000.0' in lines[0]
    assert lines[-1].startswith('{"aggregate": ')
    with pytest.raises(DataError):
        evaluate(lists, {"q1": truths["q1"]}, gallery_size=300)


def test_evaluate_per_class():
    lists = [ranked(["t"], qid="a1"), ranked(["x"], qid="a2"), ranked(["x"], qid="a3"), ranked(["u"], qid="b1")]
    truths = {"a1": QueryTruth("t", TRUTH, 1), "a2": QueryTruth("t", TRUTH, 1), "a3": QueryTruth("t", TRUTH, 1),
              "b1": QueryTruth("u", TRUTH, 1)}
    per_image = evaluate(lists, truths, SdmConfig((1,)), gallery_size=10)
    per_class = evaluate(lists, truths, SdmConfig((1,)), gallery_size=10, per_class=True)
    assert per_image.recall[1] == pytest.approx(0.5)
    assert per_class.recall[1] == pytest.approx((1 / 3 + 1) / 2)
