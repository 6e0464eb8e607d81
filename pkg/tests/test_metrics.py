import json
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alacpd.metrics import (
    AnnotationSet,
    MatchConfig,
    MetricError,
    average_rank,
    covering,
    f1_score,
    recall_by_label,
    true_positives,
)

from oracles import brute_covering, brute_f1, brute_greedy_tp, max_matching, sort_ranks


def random_instance(rng):
    n = rng.randint(2, 20)
    pred = rng.sample(range(n), rng.randint(0, min(3, n)))
    anns = [rng.sample(range(n), rng.randint(0, min(3, n))) for _ in range(rng.randint(1, 3))]
    return n, pred, anns, rng.randint(0, 5)


def as_set(anns, n):
    return AnnotationSet("r", n, {str(i + 1): a for i, a in enumerate(anns)})


# -- worked examples ---------------------------------------------------------------


def test_covering_perfect():
    assert covering([3, 7], AnnotationSet.single([3, 7], 10), 10) == 1.0


def test_covering_empty_prediction_half():
    assert covering([], AnnotationSet.single([5], 10), 10) == 0.5


def test_covering_averages_annotators():
    ann = AnnotationSet("d", 10, {"1": [5], "2": []})
    assert covering([], ann, 10) == pytest.approx(0.75, abs=1e-15)


def test_f1_exact_match():
    r = f1_score([4, 9], AnnotationSet.single([4, 9], 12), MatchConfig(0, include_trivial_start=False))
    assert tuple(r) == (1.0, 1.0, 1.0)


def test_f1_two_thirds():
    r = f1_score([11], AnnotationSet.single([10, 20], 30), MatchConfig(5, include_trivial_start=False))
    assert (r.precision, r.recall) == (1.0, 0.5)
    assert r.f1 == pytest.approx(2 / 3, abs=1e-15)


def test_matching_is_injective():
    r = f1_score([8, 12], AnnotationSet.single([10], 20), MatchConfig(5, include_trivial_start=False))
    assert r.precision == 0.5
    assert true_positives({10}, {8, 12}, 5) == {10}


def test_greedy_prefers_nearest_then_lower_index():
    # 10 is equidistant from 8 and 12; the lower one is taken so 14 can still match 12
    assert true_positives([10, 14], [8, 12], 2) == {10, 14}


def test_degenerate_empty_prediction():
    r = f1_score([], AnnotationSet.single([5], 10), MatchConfig(5, include_trivial_start=False))
    assert r.degenerate and (r.f1, r.precision, r.recall) == (0.0, 0.0, 0.0)


def test_trivial_start_counts_index_zero():
    r = f1_score([], AnnotationSet.single([5], 10), MatchConfig(0))
    assert r.precision == 1.0 and r.recall == 0.5


def test_precision_uses_union_recall_averages():
    ann = AnnotationSet("d", 100, {"1": [10], "2": [50]})
    r = f1_score([10, 50], ann, MatchConfig(2, include_trivial_start=False))
    assert r.precision == 1.0 and r.recall == 1.0
    r = f1_score([10], ann, MatchConfig(2, include_trivial_start=False))
    assert r.precision == 1.0 and r.recall == 0.5


def test_invalid_inputs():
    with pytest.raises(MetricError):
        covering([1], AnnotationSet.single([], 5), 0)
    with pytest.raises(MetricError):
        covering([7], AnnotationSet.single([], 5), 5)
    with pytest.raises(MetricError):
        MatchConfig(-1)
    with pytest.raises(MetricError):
        AnnotationSet("d", 5, {})
    with pytest.raises(MetricError):
        AnnotationSet.single([5], 5)


def test_annotation_file_round_trip(tmp_path):
    ann = AnnotationSet("apple", 100, {"1": [30, 10], "2": [50, 50]})
    p = tmp_path / "a.json"
    p.write_text(json.dumps(ann.to_json()))
    back = AnnotationSet.load(p)
    assert back == ann
    assert back.annotations["1"] == (10, 30) and back.annotations["2"] == (50,)
    with pytest.raises(MetricError, match="missing.json"):
        AnnotationSet.load(tmp_path / "missing.json")


def test_recall_by_label():
    out = recall_by_label([10, 52], {"walk": [10, 30], "run": [50]}, margin=3)
    assert out == {"walk": 0.5, "run": 1.0}


# -- brute-force oracles -----------------------------------------------------------


def test_metrics_match_brute_force_on_random_instances():
    rng = random.Random(0)
    for _ in range(200):
        n, pred, anns, margin = random_instance(rng)
        ann = as_set(anns, n)
        assert abs(covering(pred, ann, n) - brute_covering(pred, anns, n)) <= 1e-12
        for trivial in (True, False):
            got = f1_score(pred, ann, MatchConfig(margin, trivial))
            assert tuple(got) == brute_f1(pred, anns, margin, trivial)


@settings(max_examples=300, deadline=None)
@given(
    truth=st.lists(st.integers(0, 30), max_size=4, unique=True),
    pred=st.lists(st.integers(0, 30), max_size=4, unique=True),
    margin=st.integers(0, 5),
)
def test_greedy_matches_exhaustive_greedy_definition(truth, pred, margin):
    assert len(true_positives(truth, pred, margin)) == brute_greedy_tp(truth, pred, margin)


@settings(max_examples=300, deadline=None)
@given(data=st.data(), margin=st.integers(0, 5))
def test_greedy_equals_max_matching_when_margins_disjoint(data, margin):
    k = data.draw(st.integers(0, 4))
    gaps = data.draw(st.lists(st.integers(2 * margin + 1, 2 * margin + 8), min_size=k, max_size=k))
    truth = list(np.cumsum(gaps)) if gaps else []
    pred = data.draw(st.lists(st.integers(0, 60), max_size=5, unique=True))
    assert len(true_positives(truth, pred, margin)) == max_matching(truth, pred, margin)


@settings(max_examples=200, deadline=None)
@given(
    n=st.integers(2, 40),
    data=st.data(),
)
def test_covering_invariants(n, data):
    pts = st.lists(st.integers(0, n - 1), max_size=5)
    pred, a1, a2 = data.draw(pts), data.draw(pts), data.draw(pts)
    ann = AnnotationSet("h", n, {"1": a1, "2": a2})
    c = covering(pred, ann, n)
    assert 0.0 <= c <= 1.0
    shuffled = list(reversed(pred)) + pred
    assert covering(shuffled, ann, n) == c
    same = AnnotationSet("h", n, {"1": a1, "2": a1})
    assert covering(a1, same, n) == pytest.approx(1.0, abs=1e-15)
    if set(a1) - {0} != set(pred) - {0}:
        assert covering(pred, AnnotationSet.single(a1, n), n) < 1.0


@settings(max_examples=200, deadline=None)
@given(
    truth=st.lists(st.integers(0, 50), max_size=5, unique=True),
    pred=st.lists(st.integers(0, 50), max_size=5, unique=True),
    m=st.integers(0, 6),
)
def test_shrinking_margin_never_adds_matches(truth, pred, m):
    assert len(true_positives(truth, pred, m)) >= len(true_positives(truth, pred, max(0, m - 1)))


@settings(max_examples=200, deadline=None)
@given(
    truth=st.lists(st.integers(0, 50), max_size=5, unique=True),
    pred=st.lists(st.integers(0, 50), max_size=5, unique=True),
    m=st.integers(0, 6),
)
def test_f1_components_bounded(truth, pred, m):
    r = f1_score(pred, AnnotationSet.single(truth, 51), MatchConfig(m))
    assert 0.0 <= r.precision <= 1.0 and 0.0 <= r.recall <= 1.0 and 0.0 <= r.f1 <= 1.0


# -- ranks -------------------------------------------------------------------------


def test_rank_dominating_method():
    scores = {"a": {"x": 0.9, "y": 0.8}, "b": {"x": 0.1, "y": 0.2}}
    assert average_rank(scores) == {"a": 1.0, "b": 2.0}


def test_rank_ties_share_mean():
    scores = {"a": {"x": 0.5}, "b": {"x": 0.5}, "c": {"x": 0.1}}
    assert average_rank(scores) == {"a": 1.5, "b": 1.5, "c": 3.0}


def test_rank_missing_cell():
    with pytest.raises(MetricError):
        average_rank({"a": {"x": 1.0}, "b": {"y": 1.0}})


@settings(max_examples=100, deadline=None)
@given(table=st.lists(st.lists(st.sampled_from([0.1, 0.2, 0.5, 0.7, 0.9]), min_size=2, max_size=2), min_size=3, max_size=3))
def test_rank_matches_sort_oracle(table):
    methods = ["m0", "m1", "m2"]
    scores = {m: {"d0": row[0], "d1": row[1]} for m, row in zip(methods, table)}
    per_dataset = [sort_ranks([row[j] for row in table]) for j in range(2)]
    expected = {m: (per_dataset[0][i] + per_dataset[1][i]) / 2 for i, m in enumerate(methods)}
    assert average_rank(scores) == pytest.approx(expected, abs=1e-15)
