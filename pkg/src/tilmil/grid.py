"""Exhaustive learning-rate x L2 grid with best-validation-AUC per fold."""
from __future__ import annotations

import concurrent.futures as cf
import dataclasses
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import FeatureBag
from .rng import derive_seed
from .splits import SplitPlan, materialize
from .train import TrainConfig, train_fold

DEFAULT_LEARNING_RATES = (5e-2, 1e-2, 5e-3, 1e-3, 5e-4, 1e-4, 5e-5, 1e-5)
DEFAULT_REGS = (5e-3, 1e-3, 5e-4, 1e-4, 5e-5, 1e-5)
GRID_SUBSAMPLE = 500


@dataclass(frozen=True)
class GridSpec:
    learning_rates: tuple[float, ...] = DEFAULT_LEARNING_RATES
    regs: tuple[float, ...] = DEFAULT_REGS
    base: TrainConfig = field(default_factory=lambda: TrainConfig(subsample=GRID_SUBSAMPLE))

    def __post_init__(self):
        for name in ("learning_rates", "regs"):
            vals = tuple(float(v) for v in getattr(self, name))
            object.__setattr__(self, name, vals)
            if not vals:
                raise ValueError(f"{name} must be non-empty")
            if any(a <= b for a, b in zip(vals, vals[1:])):
                raise ValueError(f"{name} must be strictly decreasing")


@dataclass(frozen=True)
class CellResult:
    lr: float
    reg: float
    fold_aucs: tuple[float | None, ...]
    errors: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.errors and all(a is not None for a in self.fold_aucs)

    @property
    def mean(self) -> float | None:
        vals = [a for a in self.fold_aucs if a is not None]
        return 100.0 * math.fsum(vals) / len(vals) if vals and self.ok else None

    @property
    def std(self) -> float | None:
        vals = [a for a in self.fold_aucs if a is not None]
        if not self.ok or len(vals) < 2:
            return None
        return 100.0 * float(np.std(vals, ddof=1))


@dataclass
class GridReport:
    spec: GridSpec
    cells: list[CellResult]

    def cell(self, lr: float, reg: float) -> CellResult:
        for c in self.cells:
            if c.lr == lr and c.reg == reg:
                return c
        raise KeyError((lr, reg))

    def to_csv(self) -> str:
        lines = ["lr,reg,fold,best_val_auc"]
        for c in self.cells:
            for fold, a in enumerate(c.fold_aucs):
                lines.append(f"{c.lr!r},{c.reg!r},{fold},{'' if a is None else repr(a)}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        """Mean +/- std matrix (AUC x 100): learning rates down, L2 across."""
        header = ["lr \\ reg"] + [f"{r:.0e}" for r in self.spec.regs]
        rows = [header]
        for lr in self.spec.learning_rates:
            row = [f"{lr:.0e}"]
            for reg in self.spec.regs:
                c = self.cell(lr, reg)
                if c.mean is None:
                    row.append("error")
                elif c.std is None:
                    row.append(f"{c.mean:.1f}")
                else:
                    row.append(f"{c.mean:.1f}±{c.std:.1f}")
            rows.append(row)
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        return "\n".join("  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in rows) + "\n"


def _run_unit(base: TrainConfig, lr: float, reg: float, seed: int, plan: SplitPlan, fold: int, bags):
    config = dataclasses.replace(base, lr=lr, l2=reg, seed=seed)
    train_bags, val_bags, _ = materialize(plan, fold, bags)
    return train_fold(train_bags, val_bags, config).best_val_auc


def run_grid(spec: GridSpec, plan: SplitPlan, bags: Sequence[FeatureBag], jobs: int = 1) -> GridReport:
    """Train every (lr, reg, fold) unit. Each unit seeds its own stream from
    (base seed, lr index, reg index, fold), so scheduling order and
    parallelism cannot change any draw. A failing unit marks its cell as
    errored without stopping the others."""
    units = []
    for i, lr in enumerate(spec.learning_rates):
        for j, reg in enumerate(spec.regs):
            for fold in range(plan.k):
                seed = derive_seed(spec.base.seed, i, j, fold)
                units.append((i, j, fold, lr, reg, seed))

    results: dict[tuple[int, int, int], float | str] = {}
    if jobs <= 1:
        for i, j, fold, lr, reg, seed in units:
            try:
                results[i, j, fold] = _run_unit(spec.base, lr, reg, seed, plan, fold, bags)
            except Exception as exc:  # noqa: BLE001 - recorded per cell
                results[i, j, fold] = f"{type(exc).__name__}: {exc}"
    else:
        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {
                pool.submit(_run_unit, spec.base, lr, reg, seed, plan, fold, bags): (i, j, fold)
                for i, j, fold, lr, reg, seed in units
            }
            for fut in cf.as_completed(futures):
                key = futures[fut]
                try:
                    results[key] = fut.result()
                except Exception as exc:  # noqa: BLE001
                    results[key] = f"{type(exc).__name__}: {exc}"

    cells = []
    for i, lr in enumerate(spec.learning_rates):
        for j, reg in enumerate(spec.regs):
            values = [results[i, j, f] for f in range(plan.k)]
            aucs = tuple(v if isinstance(v, float) else None for v in values)
            errors = tuple(f"fold {f}: {v}" for f, v in enumerate(values) if isinstance(v, str))
            cells.append(CellResult(lr, reg, aucs, errors))
    return GridReport(spec, cells)


def select_best(report: GridReport) -> tuple[float, float]:
    """Highest mean AUC; ties go to the lower lr, then the lower reg."""
    candidates = [c for c in report.cells if c.mean is not None]
    if not candidates:
        raise ValueError("grid report has no successful cells")
    best = min(candidates, key=lambda c: (-c.mean, c.lr, c.reg))
    return best.lr, best.reg
