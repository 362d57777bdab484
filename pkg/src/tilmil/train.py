"""Per-slide training loop with best-validation-AUC model selection."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import FeatureBag, UndefinedMetricError
from .metrics import DEFAULT_THRESHOLD, auc, binarize, r_squared
from .model import DEFAULT_HIDDEN, HeadKind, ModelHead, forward, forward_backward, init_head
from .optim import AdamState, adam_step, init_state
from .rng import Xoshiro256

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    head_kind: HeadKind = HeadKind.LINEAR
    lr: float = 5e-3
    l2: float = 1e-4
    epochs: int = 50
    batch_size: int = 1
    subsample: int | None = None
    binarize_threshold: float = DEFAULT_THRESHOLD
    seed: int = 0
    hidden: int = DEFAULT_HIDDEN
    decoupled_l2: bool = False

    def __post_init__(self):
        object.__setattr__(self, "head_kind", HeadKind.parse(self.head_kind))
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size != 1:
            raise ValueError("batch_size must be 1")
        if self.subsample is not None and self.subsample < 1:
            raise ValueError("subsample must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not self.l2 >= 0:
            raise ValueError("l2 must be >= 0")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_mse: float
    val_auc: float
    val_r2: float | None

    def log_line(self) -> str:
        r2 = "NA" if self.val_r2 is None else f"{self.val_r2:.6f}"
        return f"epoch={self.epoch} train_mse={self.train_mse:.6f} val_auc={self.val_auc:.6f} val_r2={r2}"


@dataclass
class TrainResult:
    best_head: ModelHead
    best_epoch: int
    best_val_auc: float
    history: list[EpochStats] = field(default_factory=list)
    steps: int = 0
    visit_order: list[list[str]] = field(default_factory=list)


def subsample_tiles(bag: FeatureBag, n: int, rng: Xoshiro256) -> FeatureBag:
    """At most n tiles, uniformly without replacement, original order kept."""
    if n < 1:
        raise ValueError(f"subsample size must be >= 1, got {n}")
    if bag.n_tiles <= n:
        return bag
    return bag.with_tiles(rng.sample_indices(bag.n_tiles, n))


def _val_metrics(head: ModelHead, val_bags: Sequence[FeatureBag], positive: list[bool]) -> tuple[float, float | None]:
    preds = np.array([forward(head, b).bag_score for b in val_bags])
    labels = [b.label for b in val_bags]
    try:
        r2 = r_squared(labels, preds)
    except UndefinedMetricError:
        r2 = None
    return auc(preds, positive), r2


def train_fold(
    train_bags: Sequence[FeatureBag],
    val_bags: Sequence[FeatureBag],
    config: TrainConfig,
    on_epoch: Callable[[EpochStats], None] | None = None,
) -> TrainResult:
    if not train_bags or not val_bags:
        raise ValueError("train and validation sets must be non-empty")
    dims = {b.features.shape[1] for b in list(train_bags) + list(val_bags)}
    if len(dims) != 1:
        raise ValueError(f"bags disagree on feature dimension: {sorted(dims)}")
    h_dim = dims.pop()
    positive = [binarize(b.label, config.binarize_threshold) for b in val_bags]
    if all(positive) or not any(positive):
        raise UndefinedMetricError(
            f"validation labels are single-class at threshold {config.binarize_threshold}; AUC selection impossible"
        )

    rng = Xoshiro256(config.seed)
    head = init_head(config.head_kind, h_dim, hidden=config.hidden, rng=rng)
    state: AdamState = init_state(head, config.lr, config.l2, decoupled=config.decoupled_l2)

    result: TrainResult | None = None
    order = list(range(len(train_bags)))
    steps = 0
    history: list[EpochStats] = []
    visits: list[list[str]] = []
    for epoch in range(1, config.epochs + 1):
        rng.shuffle(order)
        losses = []
        for i in order:
            bag = train_bags[i]
            if config.subsample is not None:
                bag = subsample_tiles(bag, config.subsample, rng)
            pred, grads = forward_backward(head, bag, bag.label)
            err = pred.bag_score - bag.label
            step_loss = err * err
            if not math.isfinite(step_loss):
                raise TrainingError(f"non-finite loss on slide {bag.slide_id} in epoch {epoch}")
            losses.append(step_loss)
            head, state = adam_step(head, grads, state)
            steps += 1
        visits.append([train_bags[i].slide_id for i in order])
        val_auc, val_r2 = _val_metrics(head, val_bags, positive)
        stats = EpochStats(epoch, math.fsum(losses) / len(losses), val_auc, val_r2)
        history.append(stats)
        log.info(stats.log_line())
        if on_epoch is not None:
            on_epoch(stats)
        if result is None or val_auc > result.best_val_auc:
            result = TrainResult(head, epoch, val_auc)
    assert result is not None
    result.history = history
    result.steps = steps
    result.visit_order = visits
    return result
