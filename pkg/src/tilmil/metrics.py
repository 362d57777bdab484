"""AUC, Pearson r, R^2 and MSE, plus per-model evaluation and fold aggregation."""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .core import EvalReport, FeatureBag, PredictionRecord, UndefinedMetricError
from .model import ModelHead, forward

DEFAULT_THRESHOLD = 0.2


def binarize(score: float, threshold: float = DEFAULT_THRESHOLD) -> bool:
    """True for TILs-high. The boundary value belongs to the low class."""
    return score > threshold


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks with ties sharing the mean of their positions."""
    x = np.asarray(values, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x), dtype=np.float64)
    sorted_x = x[order]
    i = 0
    n = len(x)
    while i < n:
        j = i
        while j + 1 < n and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


def auc(predicted: Sequence[float], positive: Sequence[bool]) -> float:
    """Mann-Whitney AUC; tied (high, low) pairs count one half."""
    pos = np.asarray(positive, dtype=bool)
    if len(pos) != len(predicted):
        raise ValueError("predicted and labels differ in length")
    n_pos = int(pos.sum())
    n_neg = len(pos) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC needs both classes present")
    ranks = average_ranks(predicted)
    rank_sum = math.fsum(ranks[pos].tolist())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def _as_pairs(y_true, y_pred) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(y_true, dtype=np.float64)
    p = np.asarray(y_pred, dtype=np.float64)
    if t.shape != p.shape or t.ndim != 1:
        raise ValueError("y_true and y_pred must be 1-d and equally long")
    if not (np.isfinite(t).all() and np.isfinite(p).all()):
        raise ValueError("non-finite score")
    return t, p


def pearson_r(y_true, y_pred) -> float:
    t, p = _as_pairs(y_true, y_pred)
    if len(t) < 2:
        raise UndefinedMetricError("Pearson r needs at least 2 samples")
    dt = t - t.mean()
    dp = p - p.mean()
    stt = float(dt @ dt)
    spp = float(dp @ dp)
    if stt == 0.0 or spp == 0.0:
        raise UndefinedMetricError("Pearson r is undefined for a constant input")
    r = float(dt @ dp) / math.sqrt(stt * spp)
    return max(-1.0, min(1.0, r))


def r_squared(y_true, y_pred) -> float:
    """Coefficient of determination of the predictions as given (no refit)."""
    t, p = _as_pairs(y_true, y_pred)
    if len(t) < 2:
        raise UndefinedMetricError("R^2 needs at least 2 samples")
    dt = t - t.mean()
    ss_tot = float(dt @ dt)
    if ss_tot == 0.0:
        raise UndefinedMetricError("R^2 is undefined for constant true labels")
    res = t - p
    return 1.0 - float(res @ res) / ss_tot


def mse(y_true, y_pred) -> float:
    t, p = _as_pairs(y_true, y_pred)
    if len(t) == 0:
        raise UndefinedMetricError("MSE of an empty set")
    res = t - p
    return float(res @ res) / len(t)


def _maybe(fn, *args):
    try:
        return fn(*args)
    except UndefinedMetricError:
        return None


def report_from_scores(slide_ids: Sequence[str], y_true, y_pred,
                       threshold: float = DEFAULT_THRESHOLD) -> EvalReport:
    t, p = _as_pairs(y_true, y_pred)
    records = [PredictionRecord(s, float(a), float(b)) for s, a, b in zip(slide_ids, t, p)]
    positive = [binarize(v, threshold) for v in t]
    return EvalReport(
        records=records,
        threshold=threshold,
        auc=_maybe(auc, p, positive),
        pearson_r=_maybe(pearson_r, t, p),
        r2=_maybe(r_squared, t, p),
        mse=_maybe(mse, t, p),
    )


def evaluate(head: ModelHead, bags: Sequence[FeatureBag], threshold: float = DEFAULT_THRESHOLD) -> EvalReport:
    if not bags:
        raise ValueError("evaluate needs at least one bag")
    preds = [forward(head, bag).bag_score for bag in bags]
    return report_from_scores([b.slide_id for b in bags], [b.label for b in bags], preds, threshold)


def aggregate(values: Sequence[float | None], sem: bool = False) -> tuple[float | None, float | None]:
    """Mean and spread across folds; spread is the sample std (n-1), or the
    standard error when ``sem`` is set. Absent values are skipped."""
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    mean = math.fsum(vals) / len(vals)
    if len(vals) < 2:
        return mean, None
    std = float(np.std(vals, ddof=1))
    return mean, (std / math.sqrt(len(vals)) if sem else std)
