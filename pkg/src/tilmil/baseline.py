"""Tumor-bed TIL fraction from a TIL count and the number of tumor-bed tiles."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .core import TileGeometry
from .io import FormatError, read_csv_records

DETECTION_FIELDS = ("slide_id", "num_tils", "num_tb_tiles")


@dataclass(frozen=True)
class DetectionSummary:
    slide_id: str
    num_tils: int
    num_tb_tiles: int
    geometry: TileGeometry = field(default_factory=TileGeometry)

    def __post_init__(self):
        if self.num_tils < 0:
            raise ValueError(f"{self.slide_id}: num_tils must be >= 0, got {self.num_tils}")
        if self.num_tb_tiles < 1:
            raise ValueError(f"{self.slide_id}: num_tb_tiles must be >= 1, got {self.num_tb_tiles}")


def tb_til_percent(summary: DetectionSummary, warn: bool = True) -> float:
    """Area covered by detected TILs over tumor-bed area, as a fraction.

    Not clamped: counts can overshoot the bed area, and hiding that would
    hide the estimator's bias.
    """
    g = summary.geometry
    value = summary.num_tils * g.til_area_um2 / (summary.num_tb_tiles * g.tile_area_um2)
    if warn and value > 1.0:
        warnings.warn(f"{summary.slide_id}: tbTIL fraction {value:.4f} exceeds 1", stacklevel=2)
    return value


def read_detections(path, geometry: TileGeometry | None = None) -> list[DetectionSummary]:
    geometry = geometry or TileGeometry()
    out = []
    for line_no, row in read_csv_records(path, DETECTION_FIELDS):
        try:
            out.append(DetectionSummary(row["slide_id"], int(row["num_tils"]),
                                        int(row["num_tb_tiles"]), geometry))
        except ValueError as exc:
            raise FormatError(f"{Path(path).name} line {line_no}: {exc}") from None
    return out
