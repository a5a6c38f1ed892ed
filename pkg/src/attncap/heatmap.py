"""Attention heatmaps as binary PGM (P5) images."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np

from .errors import ContractError, DataError

UPSCALE = 16


def to_pixels(grid: np.ndarray, upscale: int = UPSCALE) -> np.ndarray:
    """Map [0, max] linearly to [0, 255] and repeat each cell upscale x upscale times."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ContractError(f"heatmap needs a 2-D grid, got shape {grid.shape}")
    if (grid < 0).any() or not np.isfinite(grid).all():
        raise ContractError("heatmap values must be finite and nonnegative")
    peak = grid.max()
    scaled = np.zeros_like(grid) if peak == 0 else np.rint(grid / peak * 255.0)
    pixels = scaled.astype(np.uint8)
    return np.repeat(np.repeat(pixels, upscale, axis=0), upscale, axis=1)


def export_heatmap(grid: np.ndarray, path, upscale: int = UPSCALE) -> Path:
    pixels = to_pixels(grid, upscale)
    h, w = pixels.shape
    path = Path(path)
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + pixels.tobytes())
    return path


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if not m:
        raise DataError(f"{path}: not a binary PGM file")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval > 255:
        raise DataError(f"{path}: 16-bit PGM not supported")
    body = raw[m.end():]
    if len(body) != w * h:
        raise DataError(f"{path}: expected {w * h} pixels, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w).copy()


def heatmap_name(entry_id: str, step: int, word: str) -> str:
    safe = re.sub(r"[^A-Za-z0-9]+", "", word) or "tok"
    return f"{entry_id}_{step:02d}_{safe}.pgm"
