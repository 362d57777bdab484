"""Full rotated cross-validation: train on each fold, report on its test set."""
from __future__ import annotations

import concurrent.futures as cf
from dataclasses import dataclass
from typing import Sequence

from .core import EvalReport, FeatureBag
from .metrics import aggregate, evaluate
from .splits import SplitPlan, materialize
from .train import TrainConfig, TrainResult, train_fold


@dataclass
class FoldOutcome:
    fold: int
    train: TrainResult
    test: EvalReport


def run_fold(plan: SplitPlan, fold: int, bags: Sequence[FeatureBag], config: TrainConfig) -> FoldOutcome:
    train_bags, val_bags, test_bags = materialize(plan, fold, bags)
    result = train_fold(train_bags, val_bags, config)
    return FoldOutcome(fold, result, evaluate(result.best_head, test_bags, config.binarize_threshold))


def run_cv(plan: SplitPlan, bags: Sequence[FeatureBag], config: TrainConfig, jobs: int = 1) -> list[FoldOutcome]:
    folds = range(plan.k)
    if jobs <= 1:
        return [run_fold(plan, f, bags, config) for f in folds]
    with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(run_fold, plan, f, bags, config) for f in folds]
        return [fut.result() for fut in futures]


def summarize(outcomes: Sequence[FoldOutcome], sem: bool = False) -> dict[str, tuple[float | None, float | None]]:
    """Mean and spread of each test metric across folds."""
    out = {}
    for name in ("r2", "auc", "pearson_r", "mse"):
        out[name] = aggregate([o.test.metrics()[name] for o in outcomes], sem=sem)
    return out


def summary_table(summary: dict, label: str = "TILMIL") -> str:
    """One summary row: model, R^2 and AUC as mean +/- spread."""
    def cell(pair):
        mean, spread = pair
        if mean is None:
            return "NA"
        return f"{mean:.2f}" if spread is None else f"{mean:.2f} ± {spread:.2f}"
    rows = [("Model", "R2", "AUC", "Pearson r"),
            (label, cell(summary["r2"]), cell(summary["auc"]), cell(summary["pearson_r"]))]
    widths = [max(len(r[i]) for r in rows) for i in range(4)]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows) + "\n"
