"""Tile-score heatmaps written as binary PPM (P6)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import FeatureBag
from .io import FormatError, atomic_write


@dataclass(frozen=True, eq=False)
class HeatmapCanvas:
    pixels: np.ndarray  # (height, width, 3) uint8
    scale: int = 1

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


def ramp(score: float) -> tuple[int, int, int]:
    """Blue (0) to red (1), linear in both channels."""
    return int(np.floor(255.0 * score + 0.5)), 0, int(np.floor(255.0 * (1.0 - score) + 0.5))


def render(bag: FeatureBag, tile_scores: Sequence[float], scale: int = 1) -> HeatmapCanvas:
    scores = np.asarray(tile_scores, dtype=np.float64)
    if scores.shape != (bag.n_tiles,):
        raise ValueError(f"expected {bag.n_tiles} tile scores, got {scores.shape}")
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    bad = np.flatnonzero(~((scores >= 0.0) & (scores <= 1.0)))
    if bad.size:
        raise ValueError(f"tile score out of [0,1] at tile {bad[0]}: {scores[bad[0]]}")
    cols, rows = bag.coords[:, 0], bag.coords[:, 1]
    width = (int(cols.max()) + 1) * scale
    height = (int(rows.max()) + 1) * scale
    pixels = np.full((height, width, 3), 255, dtype=np.uint8)
    red = np.floor(255.0 * scores + 0.5).astype(np.uint8)
    blue = np.floor(255.0 * (1.0 - scores) + 0.5).astype(np.uint8)
    for c, r, rv, bv in zip(cols, rows, red, blue):
        block = pixels[r * scale : (r + 1) * scale, c * scale : (c + 1) * scale]
        block[..., 0] = rv
        block[..., 1] = 0
        block[..., 2] = bv
    return HeatmapCanvas(pixels, scale)


def encode_ppm(canvas: HeatmapCanvas) -> bytes:
    header = f"P6\n{canvas.width} {canvas.height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(canvas.pixels, dtype=np.uint8).tobytes()


def write_ppm(canvas: HeatmapCanvas, path) -> None:
    atomic_write(path, encode_ppm(canvas))


def decode_ppm(data: bytes) -> np.ndarray:
    """Parse the P6 layout written by encode_ppm (single-space/newline header)."""
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P6":
        raise FormatError("bad magic at offset 0")
    try:
        width, height = (int(v) for v in parts[1].split(b" "))
        maxval = int(parts[2])
    except ValueError:
        raise FormatError("malformed PPM header") from None
    if maxval != 255:
        raise FormatError(f"unsupported maxval {maxval}")
    body = parts[3]
    if len(body) != width * height * 3:
        raise FormatError(f"pixel data length {len(body)} != {width * height * 3}")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3).copy()
