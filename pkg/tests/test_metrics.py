import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tilmil.core import UndefinedMetricError
from tilmil.metrics import (aggregate, auc, average_ranks, binarize, evaluate, mse, pearson_r,
                            r_squared, report_from_scores)
from tilmil.model import init_head

from conftest import make_bag
from oracles import brute_force_auc, direct_pearson, direct_r2


def test_binarize_boundary():
    assert binarize(0.20, 0.2) is False
    assert binarize(0.20001, 0.2) is True
    assert binarize(0.0) is False


def test_auc_four_point_case():
    # pairs (high, low): (0.35,0.1) ok, (0.35,0.4) wrong, (0.8,0.1) ok, (0.8,0.4) ok
    assert auc([0.1, 0.4, 0.35, 0.8], [False, False, True, True]) == 0.75


def test_auc_perfect_and_tied():
    assert auc([0.1, 0.2, 0.3, 0.4], [False, False, True, True]) == 1.0
    assert auc([0.3] * 5, [False, True, False, True, True]) == 0.5


def test_auc_single_class_undefined():
    with pytest.raises(UndefinedMetricError):
        auc([0.1, 0.2], [True, True])


def test_average_ranks_ties():
    np.testing.assert_array_equal(average_ranks([3.0, 1.0, 3.0, 2.0]), [3.5, 1.0, 3.5, 2.0])


def test_pearson_examples():
    x = np.array([0.1, 0.5, 0.2, 0.9])
    assert pearson_r(x, 2 * x + 1) == pytest.approx(1.0, abs=1e-15)
    assert pearson_r(x, -x) == pytest.approx(-1.0, abs=1e-15)
    # hand value: 3 / sqrt(2 * 14/3)
    assert pearson_r([1, 2, 3], [1, 2, 4]) == pytest.approx(3 / math.sqrt(28 / 3), abs=1e-15)
    assert pearson_r([1, 2, 3], [1, 2, 4]) == pytest.approx(0.981, abs=1e-3)


def test_pearson_constant_undefined():
    with pytest.raises(UndefinedMetricError):
        pearson_r([1, 2, 3], [5, 5, 5])


def test_r2_examples():
    y = [0.1, 0.2, 0.3]
    assert r_squared(y, y) == 1.0
    assert r_squared(y, [0.2, 0.2, 0.2]) == pytest.approx(0.0, abs=1e-15)
    assert r_squared(y, [0.1, 0.2, 0.4]) == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(UndefinedMetricError):
        r_squared([0.3, 0.3], [0.1, 0.2])


def test_r2_is_not_squared_pearson():
    y = [0.1, 0.2, 0.3, 0.4]
    pred = [0.5, 0.6, 0.7, 0.8]  # perfectly correlated, badly biased
    assert pearson_r(y, pred) == pytest.approx(1.0)
    assert r_squared(y, pred) < 0


def test_mse():
    assert mse([0.1, 0.5], [0.2, 0.5]) == pytest.approx(0.005, abs=1e-15)


small_scores = st.lists(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0]) | st.floats(0, 1),
                        min_size=2, max_size=12)


@settings(max_examples=500, deadline=None)
@given(st.data())
def test_auc_equals_pair_counting(data):
    scores = data.draw(small_scores)
    labels = data.draw(st.lists(st.booleans(), min_size=len(scores), max_size=len(scores)))
    if all(labels) or not any(labels):
        return
    assert auc(scores, labels) == brute_force_auc(scores, labels)


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_r_and_r2_match_direct_formula(data):
    n = data.draw(st.integers(2, 12))
    y = data.draw(st.lists(st.floats(0, 1), min_size=n, max_size=n))
    p = data.draw(st.lists(st.floats(-1, 2), min_size=n, max_size=n))
    if np.ptp(y) < 1e-6 or np.ptp(p) < 1e-6:
        return
    assert abs(pearson_r(y, p) - direct_pearson(y, p)) <= 1e-12
    assert abs(r_squared(y, p) - direct_r2(y, p)) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=12), st.randoms())
def test_auc_rank_invariance(scores, rnd):
    labels = [rnd.random() < 0.5 for _ in scores]
    if all(labels) or not any(labels):
        return
    transformed = [math.atan(3 * s) + s ** 3 for s in scores]  # strictly increasing
    assert auc(scores, labels) == auc(transformed, labels)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=3, max_size=12), st.floats(0.1, 10), st.floats(-5, 5))
def test_pearson_affine_invariance(scores, a, b):
    y = np.linspace(0, 1, len(scores))
    if np.ptp(scores) < 1e-3:
        return
    r = pearson_r(y, scores)
    assert pearson_r(y, [a * s + b for s in scores]) == pytest.approx(r, abs=1e-9)
    assert pearson_r(y, [-a * s + b for s in scores]) == pytest.approx(-r, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=12), st.randoms())
def test_r2_sign_tracks_mean_predictor(y, rnd):
    if np.ptp(y) < 1e-6:
        return
    pred = [rnd.uniform(-1, 2) for _ in y]
    sse = sum((a - b) ** 2 for a, b in zip(y, pred))
    sse_mean = sum((a - np.mean(y)) ** 2 for a in y)
    if abs(sse - sse_mean) < 1e-9 * sse_mean:
        return
    assert (r_squared(y, pred) < 0) == (sse > sse_mean)


def test_r2_decreases_with_residual():
    y = np.array([0.1, 0.3, 0.2, 0.6])
    prev = 2.0
    for eps in [0.0, 0.01, 0.05, 0.2, 1.0]:
        cur = r_squared(y, y + eps)
        assert cur < prev
        prev = cur


def test_evaluate_perfect_predictions():
    rep = report_from_scores(["a", "b", "c"], [0.1, 0.3, 0.5], [0.1, 0.3, 0.5])
    assert rep.auc == 1.0 and rep.pearson_r == pytest.approx(1.0) and rep.r2 == 1.0 and rep.mse == 0.0


def test_evaluate_constant_head():
    bags = [make_bag([[float(i)]], label=lab, slide_id=f"s{i}") for i, lab in enumerate([0.1, 0.3, 0.5])]
    rep = evaluate(init_head("linear", 1), bags)
    assert rep.pearson_r is None
    assert rep.auc == 0.5
    assert rep.r2 is not None and rep.mse is not None


def test_evaluate_class_counts():
    labels = [0.1, 0.1, 0.3, 0.3, 0.5]
    positive = [binarize(v, 0.2) for v in labels]
    assert positive.count(False) == 2 and positive.count(True) == 3


def test_aggregate_uses_sample_std():
    mean, sd = aggregate([0.5, 0.7, 0.9])
    assert mean == pytest.approx(0.7) and sd == pytest.approx(0.2)
    _, sem = aggregate([0.5, 0.7, 0.9], sem=True)
    assert sem == pytest.approx(0.2 / math.sqrt(3))
    assert aggregate([None, 0.4]) == (0.4, None)
    assert aggregate([None]) == (None, None)
