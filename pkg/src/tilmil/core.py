"""Domain types shared across the package."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class BagValidationError(ValueError):
    """A FeatureBag violates one of its invariants."""


class UndefinedMetricError(ValueError):
    """A statistic is undefined for the given input (e.g. a single class)."""


@dataclass(frozen=True)
class TileGeometry:
    tile_px: float = 512
    mpp: float = 0.5
    til_radius_um: float = 4.0

    def __post_init__(self):
        for name in ("tile_px", "mpp", "til_radius_um"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be strictly positive, got {value}")

    @property
    def tile_area_um2(self) -> float:
        side = self.tile_px * self.mpp
        return side * side

    @property
    def til_area_um2(self) -> float:
        return math.pi * self.til_radius_um * self.til_radius_um


@dataclass(frozen=True, eq=False)
class FeatureBag:
    """One slide: its tumor-bed tiles, their features and the slide label.

    ``coords`` is an (N, 2) int array of (col, row); ``features`` an (N, H)
    float64 array. Both are made read-only on construction. Invariants are
    checked by :func:`validate_bag`, not here, so a malformed bag can still
    be built and reported on.
    """

    patient_id: str
    slide_id: str
    coords: np.ndarray
    features: np.ndarray
    label: float
    stratum: str = ""
    h_dim: int = field(default=-1)

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.int64).reshape(-1, 2)
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim == 1:
            feats = feats.reshape(1, -1)
        feats = np.array(feats, dtype=np.float64, copy=True)
        coords.setflags(write=False)
        feats.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "label", float(self.label))
        if self.h_dim == -1:
            object.__setattr__(self, "h_dim", int(feats.shape[1]) if feats.ndim == 2 else 0)

    @property
    def n_tiles(self) -> int:
        return int(self.features.shape[0])

    def with_tiles(self, index: Sequence[int] | np.ndarray) -> "FeatureBag":
        """A bag restricted (or re-ordered) to the given tile indices."""
        index = np.asarray(index, dtype=np.int64)
        return FeatureBag(
            self.patient_id,
            self.slide_id,
            self.coords[index],
            self.features[index],
            self.label,
            self.stratum,
            self.h_dim,
        )

    def tiles(self) -> list["TileFeature"]:
        return [
            TileFeature(int(c), int(r), self.features[i])
            for i, (c, r) in enumerate(self.coords)
        ]


@dataclass(frozen=True, eq=False)
class TileFeature:
    col: int
    row: int
    features: np.ndarray


def bag_from_tiles(
    patient_id: str,
    slide_id: str,
    tiles: Sequence[TileFeature],
    label: float,
    stratum: str = "",
    h_dim: int | None = None,
) -> FeatureBag:
    """Build a bag from TileFeature records; ragged feature rows are kept as a
    bag with a dimension mismatch so validation can report where."""
    if h_dim is None:
        h_dim = len(tiles[0].features) if tiles else 0
    coords = np.array([(t.col, t.row) for t in tiles], dtype=np.int64).reshape(-1, 2)
    rows = [np.asarray(t.features, dtype=np.float64) for t in tiles]
    bad = [i for i, r in enumerate(rows) if r.shape != (h_dim,)]
    if bad:
        # keep the bag constructible; validate_bag reports the first bad tile
        padded = np.full((len(rows), h_dim), np.nan)
        for i, r in enumerate(rows):
            if i not in bad:
                padded[i] = r
        bag = FeatureBag(patient_id, slide_id, coords, padded, label, stratum, h_dim)
        object.__setattr__(bag, "_bad_dims", {i: rows[i].size for i in bad})
        return bag
    feats = np.vstack(rows) if rows else np.empty((0, h_dim))
    return FeatureBag(patient_id, slide_id, coords, feats, label, stratum, h_dim)


def validate_bag(bag: FeatureBag) -> str | None:
    """Return None for a well-formed bag, else a message naming the first
    violated invariant and where it occurs."""
    if bag.h_dim < 1:
        return f"h_dim must be positive, got {bag.h_dim}"
    if bag.n_tiles < 1:
        return "empty bag (N must be >= 1)"
    bad_dims = getattr(bag, "_bad_dims", None)
    if bad_dims:
        i = min(bad_dims)
        return f"dimension mismatch at tile {i} (got {bad_dims[i]} features, expected {bag.h_dim})"
    if bag.features.shape[1] != bag.h_dim:
        return f"dimension mismatch at tile 0 (got {bag.features.shape[1]} features, expected {bag.h_dim})"
    if bag.coords.shape[0] != bag.n_tiles:
        return f"coordinate count {bag.coords.shape[0]} does not match tile count {bag.n_tiles}"
    if not (math.isfinite(bag.label) and 0.0 <= bag.label <= 1.0):
        return f"label out of range: {bag.label}"
    finite = np.isfinite(bag.features)
    if not finite.all():
        tile, col = np.argwhere(~finite)[0]
        return f"non-finite feature at tile {tile}, feature {col}"
    if (bag.coords < 0).any():
        tile = int(np.argwhere((bag.coords < 0).any(axis=1))[0][0])
        return f"negative coordinate at tile {tile}"
    seen: dict[tuple[int, int], int] = {}
    for i, (c, r) in enumerate(bag.coords.tolist()):
        if (c, r) in seen:
            return f"duplicate coordinate ({c},{r}) at tile {i} (first at tile {seen[(c, r)]})"
        seen[(c, r)] = i
    return None


def check_bag(bag: FeatureBag) -> FeatureBag:
    problem = validate_bag(bag)
    if problem is not None:
        raise BagValidationError(f"{bag.slide_id}: {problem}")
    return bag


@dataclass(frozen=True)
class PredictionRecord:
    slide_id: str
    true_label: float
    predicted: float


@dataclass
class EvalReport:
    """Predicted vs true scores for one model on one set of bags.

    Metrics that are undefined for the data (single class, constant scores)
    are None rather than a made-up number.
    """

    records: list[PredictionRecord]
    threshold: float
    auc: float | None = None
    pearson_r: float | None = None
    r2: float | None = None
    mse: float | None = None

    def metrics(self) -> dict[str, float | None]:
        return {"auc": self.auc, "pearson_r": self.pearson_r, "r2": self.r2, "mse": self.mse}
