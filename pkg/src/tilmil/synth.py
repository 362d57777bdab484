"""Synthetic bags with a planted TILMIL head as ground truth."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import FeatureBag
from .model import HeadKind, ModelHead, forward, init_head, sigmoid_array
from .rng import Xoshiro256

# bag scores are calibrated to land in this range
SCORE_LOW, SCORE_HIGH = 0.05, 0.6


@dataclass(frozen=True)
class SynthConfig:
    num_bags: int = 200
    tiles_per_bag_range: tuple[int, int] = (100, 400)
    h_dim: int = 32
    label_noise_sd: float = 0.02
    strata: tuple[tuple[str, float], ...] = (("A", 0.5), ("B", 0.5))
    planted_kind: HeadKind = HeadKind.LINEAR
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "planted_kind", HeadKind.parse(self.planted_kind))
        object.__setattr__(self, "strata", tuple((str(n), float(p)) for n, p in self.strata))
        object.__setattr__(self, "tiles_per_bag_range", tuple(int(x) for x in self.tiles_per_bag_range))
        lo, hi = self.tiles_per_bag_range
        if self.num_bags < 1:
            raise ValueError("num_bags must be >= 1")
        if not 1 <= lo <= hi:
            raise ValueError(f"tiles_per_bag_range must satisfy 1 <= min <= max, got {(lo, hi)}")
        if self.h_dim < 1:
            raise ValueError("h_dim must be >= 1")
        if not self.label_noise_sd >= 0:
            raise ValueError("label_noise_sd must be >= 0")
        if self.planted_kind is HeadKind.TWO_LINEAR:
            raise ValueError("planted_kind must be linear or two_linear_tanh")
        if not self.strata or any(p < 0 for _, p in self.strata):
            raise ValueError("strata need non-negative proportions")
        if abs(math.fsum(p for _, p in self.strata) - 1.0) > 1e-9:
            raise ValueError("stratum proportions must sum to 1")


def stratum_counts(strata, total: int) -> list[int]:
    """Largest-remainder apportionment; each count is within 1 of p*total."""
    exact = [p * total for _, p in strata]
    counts = [int(math.floor(x)) for x in exact]
    short = total - sum(counts)
    order = sorted(range(len(strata)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:short]:
        counts[i] += 1
    return counts


def _expected_sigmoid(scale: float) -> callable:
    nodes, weights = np.polynomial.hermite_e.hermegauss(64)
    weights = weights / weights.sum()

    def g(t: float) -> float:
        return float(weights @ sigmoid_array(t + scale * nodes))
    return g


def _solve(g, target: float, lo: float = -60.0, hi: float = 60.0) -> float:
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _grid_coords(n: int) -> np.ndarray:
    width = math.ceil(math.sqrt(n))
    idx = np.arange(n)
    return np.stack([idx % width, idx // width], axis=1)


def generate(config: SynthConfig) -> tuple[list[FeatureBag], ModelHead]:
    """Build ``num_bags`` bags and the head that generated their labels.

    Tile features are standard normal around a per-bag mean vector drawn
    from an isotropic normal, so bags differ in every direction and only
    the planted head's direction carries the label. Its scale and the
    planted bias put about 90% of bag scores inside (0.05, 0.6). Features are rounded
    to float32 before scoring, so a bag written to disk and read back
    reproduces its noiseless label exactly.
    """
    rng = Xoshiro256(config.seed)
    h = config.h_dim
    if config.planted_kind is HeadKind.LINEAR:
        w = rng.standard_normal(h) / math.sqrt(h)
        norm = float(np.linalg.norm(w)) or 1.0
        g = _expected_sigmoid(norm)
        t_lo, t_hi = _solve(g, SCORE_LOW), _solve(g, SCORE_HIGH)
        planted = ModelHead(HeadKind.LINEAR, {"w": w, "b": np.array(0.5 * (t_lo + t_hi))})
        # bag logit offsets w.mu ~ N(0, spread^2): ~90% of bags inside the range
        spread = (t_hi - t_lo) / (2 * 1.6448536269514722) / norm
    else:
        planted = init_head(HeadKind.TWO_LINEAR_TANH, h, rng=rng)
        spread = 1.0

    counts = stratum_counts(config.strata, config.num_bags)
    strata = [name for (name, _), c in zip(config.strata, counts) for _ in range(c)]
    rng.shuffle(strata)

    lo_n, hi_n = config.tiles_per_bag_range
    raw = []
    for i in range(config.num_bags):
        n = rng.integers(lo_n, hi_n)
        mu = spread * rng.standard_normal(h)
        feats = rng.standard_normal(n * h).reshape(n, h) + mu
        feats = feats.astype(np.float32).astype(np.float64)
        raw.append((n, feats))

    if config.planted_kind is HeadKind.TWO_LINEAR_TANH:
        # centre the output bias on the calibration range using the drawn data
        def mean_score(b2: float) -> float:
            head = planted.replace(b2=np.array(b2))
            return float(np.mean([forward(head, FeatureBag("", "", _grid_coords(n), f, 0.0)).bag_score
                                  for n, f in raw]))
        planted = planted.replace(b2=np.array(_solve(mean_score, 0.5 * (SCORE_LOW + SCORE_HIGH), -20, 20)))

    bags = []
    width = len(str(config.num_bags - 1))
    for i, (n, feats) in enumerate(raw):
        coords = _grid_coords(n)
        probe = FeatureBag("", "", coords, feats, 0.0)
        score = forward(planted, probe).bag_score
        label = score
        if config.label_noise_sd > 0:
            label = min(1.0, max(0.0, score + config.label_noise_sd * rng.normal()))
        pid = f"P{i:0{width}d}"
        bags.append(FeatureBag(pid, f"{pid}-S1", coords, feats, label, strata[i], h))
    return bags, planted
