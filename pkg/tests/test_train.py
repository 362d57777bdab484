from collections import Counter

import numpy as np
import pytest

from tilmil.core import UndefinedMetricError
from tilmil.metrics import evaluate
from tilmil.rng import Xoshiro256
from tilmil.synth import SynthConfig, generate
from tilmil.train import TrainConfig, TrainingError, subsample_tiles, train_fold

from conftest import random_bag


@pytest.fixture(scope="module")
def data():
    bags, _ = generate(SynthConfig(num_bags=40, tiles_per_bag_range=(20, 60), h_dim=8, seed=3))
    thr = float(np.median([b.label for b in bags]))
    return bags[:28], bags[28:], thr


def test_subsample_noop_when_small(np_rng):
    bag = random_bag(np_rng, 300, 2)
    assert subsample_tiles(bag, 500, Xoshiro256(0)) is bag


def test_subsample_distinct_and_ordered(np_rng):
    bag = random_bag(np_rng, 1000, 2)
    sub = subsample_tiles(bag, 500, Xoshiro256(0))
    assert sub.n_tiles == 500
    keys = [tuple(c) for c in sub.coords]
    assert len(set(keys)) == 500
    original = {tuple(c): i for i, c in enumerate(bag.coords)}
    idx = [original[k] for k in keys]
    assert idx == sorted(idx)
    np.testing.assert_array_equal(sub.features, bag.features[idx])


def test_subsample_deterministic(np_rng):
    bag = random_bag(np_rng, 1000, 2)
    a = subsample_tiles(bag, 500, Xoshiro256(7))
    b = subsample_tiles(bag, 500, Xoshiro256(7))
    np.testing.assert_array_equal(a.coords, b.coords)


def test_config_validation():
    with pytest.raises(ValueError, match="epochs"):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=2)
    with pytest.raises(ValueError):
        TrainConfig(subsample=0)


def test_single_epoch(data):
    train, val, thr = data
    result = train_fold(train, val, TrainConfig(epochs=1, binarize_threshold=thr))
    assert len(result.history) == 1 and result.best_epoch == 1
    assert result.steps == len(train)


def test_step_count_and_visits(data):
    train, val, thr = data
    result = train_fold(train, val, TrainConfig(epochs=4, binarize_threshold=thr))
    assert result.steps == 4 * len(train)
    for epoch in result.visit_order:
        assert Counter(epoch) == Counter(b.slide_id for b in train)


def test_best_epoch_is_first_maximum(data):
    train, val, thr = data
    result = train_fold(train, val, TrainConfig(epochs=15, lr=1e-2, binarize_threshold=thr))
    aucs = [h.val_auc for h in result.history]
    assert result.best_val_auc == max(aucs)
    assert result.best_epoch == aucs.index(max(aucs)) + 1


def test_reevaluating_best_head_reproduces_auc(data):
    train, val, thr = data
    result = train_fold(train, val, TrainConfig(epochs=10, lr=1e-2, binarize_threshold=thr))
    assert abs(evaluate(result.best_head, val, thr).auc - result.best_val_auc) <= 1e-12


@pytest.mark.parametrize("kind", ["linear", "two_linear_tanh"])
def test_bit_identical_reruns(data, kind):
    train, val, thr = data
    cfg = TrainConfig(head_kind=kind, epochs=3, subsample=25, binarize_threshold=thr, seed=11, hidden=16)
    a = train_fold(train, val, cfg)
    b = train_fold(train, val, cfg)
    assert [h.log_line() for h in a.history] == [h.log_line() for h in b.history]
    for k in a.best_head.params:
        assert a.best_head.params[k].tobytes() == b.best_head.params[k].tobytes()


def test_seed_changes_only_shuffle_for_zero_init_linear(data):
    train, val, thr = data
    a = train_fold(train, val, TrainConfig(epochs=2, binarize_threshold=thr, seed=1))
    b = train_fold(train, val, TrainConfig(epochs=2, binarize_threshold=thr, seed=2))
    assert a.visit_order != b.visit_order
    for ea, eb in zip(a.visit_order, b.visit_order):
        assert Counter(ea) == Counter(eb)


def test_planted_signal_recovered():
    bags, _ = generate(SynthConfig(num_bags=80, tiles_per_bag_range=(20, 60), h_dim=8, seed=5))
    thr = float(np.median([b.label for b in bags]))
    result = train_fold(bags[:50], bags[50:65], TrainConfig(lr=1e-2, l2=1e-4, epochs=50, binarize_threshold=thr))
    assert result.best_val_auc >= 0.95


def test_single_class_validation_rejected(data):
    train, val, _ = data
    with pytest.raises(UndefinedMetricError):
        train_fold(train, val, TrainConfig(epochs=1, binarize_threshold=1.0))


def test_log_line_format(data):
    train, val, thr = data
    lines = []
    train_fold(train, val, TrainConfig(epochs=2, binarize_threshold=thr), on_epoch=lambda s: lines.append(s.log_line()))
    assert lines[0].startswith("epoch=1 train_mse=") and " val_auc=" in lines[0] and " val_r2=" in lines[0]


def test_non_finite_loss_names_slide(data, monkeypatch):
    import tilmil.train as tr
    train, val, thr = data
    real = tr.forward_backward

    def poisoned(head, bag, label):
        pred, grads = real(head, bag, label)
        if bag.slide_id == train[0].slide_id:
            pred = type(pred)(pred.tile_scores, float("nan"))
        return pred, grads

    monkeypatch.setattr(tr, "forward_backward", poisoned)
    with pytest.raises(TrainingError, match=train[0].slide_id):
        train_fold(train, val, TrainConfig(epochs=1, binarize_threshold=thr))
