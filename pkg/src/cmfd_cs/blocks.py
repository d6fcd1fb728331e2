"""Overlapping block tiling and singular-value block features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NumericalError, ParameterError

R_MIN, R_MAX = 4, 20
SV_FLOOR = 1e-6


class BlockFeature(NamedTuple):
    origin: tuple[int, int]  # (row, col) in coarse-band pixels
    sv: np.ndarray
    feature: np.ndarray
    svb: float


@dataclass
class BlockGrid:
    """All R x R blocks of a band, row-major by top-left origin.

    ``blocks`` is a read-only strided view of shape (rows*cols, R, R).
    ``sv``, ``features`` and ``svb`` stay ``None`` until
    :func:`svd_features` fills them.
    """

    block_size: int
    rows: int
    cols: int
    blocks: np.ndarray
    sv: np.ndarray | None = None
    features: np.ndarray | None = None
    svb: np.ndarray | None = None

    def __len__(self) -> int:
        return self.rows * self.cols

    @property
    def origins(self) -> np.ndarray:
        idx = np.arange(len(self))
        return np.stack([idx // self.cols, idx % self.cols], axis=1)

    def index(self, row: int, col: int) -> int:
        return row * self.cols + col

    def __getitem__(self, k: int) -> BlockFeature:
        if self.features is None:
            raise ValueError("features not computed; call svd_features first")
        return BlockFeature(
            origin=(int(k // self.cols), int(k % self.cols)),
            sv=self.sv[k],
            feature=self.features[k],
            svb=float(self.svb[k]),
        )


def tile_blocks(coarse, R: int, check_bounds: bool = True) -> BlockGrid:
    """Slide an R x R window over ``coarse`` with stride 1.

    Produces (M'-R+1) x (N'-R+1) blocks, left to right then top to bottom.
    """
    band = np.ascontiguousarray(coarse, dtype=np.float64)
    if band.ndim != 2:
        raise ParameterError(f"band must be 2-D, got shape {band.shape}")
    R = int(R)
    if check_bounds and not R_MIN <= R <= R_MAX:
        raise ParameterError(f"block size R={R} outside [{R_MIN}, {R_MAX}]")
    if R < 1 or R > min(band.shape):
        raise ParameterError(f"block size R={R} larger than band {band.shape}")
    view = sliding_window_view(band, (R, R))
    rows, cols = view.shape[:2]
    return BlockGrid(block_size=R, rows=rows, cols=cols, blocks=view.reshape(rows * cols, R, R))


def log_inverse(sv: np.ndarray, floor: float = SV_FLOOR) -> np.ndarray:
    """ln(1 / max(sv, floor)), elementwise."""
    return -np.log(np.maximum(sv, floor))


def svd_features(grid: BlockGrid, floor: float = SV_FLOOR, chunk: int = 8192) -> BlockGrid:
    """Fill singular values, log-inverse feature vectors and their sums."""
    n = len(grid)
    sv = np.empty((n, grid.block_size), dtype=np.float64)
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        try:
            sv[start:stop] = np.linalg.svd(grid.blocks[start:stop], compute_uv=False)
        except np.linalg.LinAlgError as exc:
            bad = _first_failing_block(grid.blocks[start:stop])
            origin = divmod(start + bad, grid.cols)
            raise NumericalError(f"SVD did not converge for block at origin {origin}") from exc
    features = log_inverse(sv, floor)
    grid.sv = sv
    grid.features = features
    grid.svb = features.sum(axis=1)
    return grid


def _first_failing_block(blocks: np.ndarray) -> int:
    for k, b in enumerate(blocks):
        try:
            np.linalg.svd(b, compute_uv=False)
        except np.linalg.LinAlgError:
            return k
    return 0


def textured_blocks(grid: BlockGrid, min_std: float) -> np.ndarray | None:
    """Mask of blocks whose intensity standard deviation reaches ``min_std``.

    Returns ``None`` (every block active) when ``min_std`` is not positive.
    """
    if min_std <= 0:
        return None
    return grid.blocks.std(axis=(1, 2)) >= min_std


def block_features(coarse, R: int, floor: float = SV_FLOOR) -> BlockGrid:
    return svd_features(tile_blocks(coarse, R), floor)
