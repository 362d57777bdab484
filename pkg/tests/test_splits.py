import itertools
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from tilmil.splits import SplitError, SplitPlan, materialize, patients_of, stratified_kfold

from conftest import make_bag


def patients(n, strata=("A",)):
    return [(f"p{i:03d}", strata[i % len(strata)]) for i in range(n)]


def check_plan(plan: SplitPlan, pts):
    k = plan.k
    ids = {p for p, _ in pts}
    stratum = dict(pts)
    sizes = [len(f) for f in plan.base_folds]
    assert max(sizes) - min(sizes) <= 1
    tests = []
    for i in range(k):
        train, val, test = plan.roles(i)
        assert not (train & val) and not (train & test) and not (val & test)
        assert train | val | test == ids
        tests.extend(test)
        for role, n_base in ((train, k - 2), (val, 1), (test, 1)):
            counts = Counter(stratum[p] for p in role)
            total = Counter(stratum.values())
            for s, n_s in total.items():
                assert abs(counts.get(s, 0) - n_s * n_base / k) <= n_base
    assert sorted(tests) == sorted(ids)


def test_ten_patients_one_stratum():
    pts = patients(10)
    plan = stratified_kfold(pts, 5, seed=0)
    assert [len(f) for f in plan.base_folds] == [2] * 5
    check_plan(plan, pts)


def test_two_strata_one_each_per_fold():
    pts = [(f"a{i}", "A") for i in range(5)] + [(f"b{i}", "B") for i in range(5)]
    plan = stratified_kfold(pts, 5, seed=3)
    for fold in plan.base_folds:
        assert sorted(p[0] for p in fold) == ["a", "b"]


def test_deterministic():
    pts = patients(37, ("X", "Y", "Z"))
    assert stratified_kfold(pts, 5, 1) == stratified_kfold(pts, 5, 1)
    assert stratified_kfold(pts, 5, 1) != stratified_kfold(pts, 5, 2)


def test_too_few_patients():
    with pytest.raises(SplitError):
        stratified_kfold(patients(4), 5)


def test_val_is_next_base_fold():
    plan = stratified_kfold(patients(10), 5, 0)
    for i in range(5):
        _, val, test = plan.roles(i)
        assert test == frozenset(plan.base_folds[i])
        assert val == frozenset(plan.base_folds[(i + 1) % 5])


@settings(max_examples=200, deadline=None)
@given(st.integers(5, 120), st.integers(1, 5), st.integers(0, 2**32), st.randoms())
def test_plan_invariants_random(n, n_strata, seed, rnd):
    names = [f"s{j}" for j in range(n_strata)]
    pts = [(f"p{i}", rnd.choice(names)) for i in range(n)]
    check_plan(stratified_kfold(pts, 5, seed), pts)


def test_csv_round_trip():
    plan = stratified_kfold(patients(13, ("A", "B")), 5, 7)
    text = plan.to_csv()
    assert text.splitlines()[0] == "patient_id,fold0,fold1,fold2,fold3,fold4"
    assert set("".join(line.split(",", 1)[1] for line in text.splitlines()[1:])) <= set("TVE,")
    again = SplitPlan.from_csv(text)
    for i in range(5):
        assert again.roles(i) == plan.roles(i)


def test_csv_rejects_non_rotation():
    with pytest.raises(SplitError):
        SplitPlan.from_csv("patient_id,fold0,fold1,fold2,fold3,fold4\np1,E,T,V,T,T\n")


def _bags(plan_patients, slides_per_patient=1):
    return [make_bag([[0.0]], slide_id=f"{p}-{j}", patient_id=p, stratum=s)
            for p, s in plan_patients for j in range(slides_per_patient)]


def test_materialize_routes_all_slides_of_a_patient():
    pts = patients(10)
    plan = stratified_kfold(pts, 5, 0)
    bags = _bags(pts, 2)
    for i in range(5):
        train, val, test = materialize(plan, i, bags)
        test_patients = {b.patient_id for b in test}
        assert len(test) == 2 * len(test_patients)
        for role in (train, val):
            assert not test_patients & {b.patient_id for b in role}
    seen = Counter(b.slide_id for i in range(5) for b in materialize(plan, i, bags)[2])
    assert set(seen.values()) == {1} and len(seen) == len(bags)


def test_materialize_errors():
    pts = patients(10)
    plan = stratified_kfold(pts, 5, 0)
    with pytest.raises(SplitError, match="out of range"):
        materialize(plan, 5, _bags(pts))
    with pytest.raises(SplitError, match="ghost"):
        materialize(plan, 0, _bags(pts) + [make_bag([[0.0]], slide_id="x", patient_id="ghost")])
    val_patients = set(plan.base_folds[1])
    without_val = [b for b in _bags(pts) if b.patient_id not in val_patients]
    with pytest.raises(SplitError, match="empty split role"):
        materialize(plan, 0, without_val)


def test_patients_of_dedupes():
    bags = [make_bag([[0.0]], slide_id="a1", patient_id="a", stratum="X"),
            make_bag([[0.0]], slide_id="a2", patient_id="a", stratum="X"),
            make_bag([[0.0]], slide_id="b1", patient_id="b", stratum="Y")]
    assert patients_of(bags) == [("a", "X"), ("b", "Y")]
