"""Orthonormal 2-D Haar decomposition used to obtain the coarse (LL) band."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError

SQRT1_2 = 1.0 / np.sqrt(2.0)


def _analyze(x: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    """One Haar analysis step along ``axis``.

    A trailing unpaired sample (odd length) is passed to the low band with
    unit gain and contributes zero detail, which keeps the step orthonormal.
    """
    x = np.moveaxis(x, axis, 0)
    n = x.shape[0]
    even, odd = x[0 : n - 1 : 2], x[1::2]
    low = (even + odd) * SQRT1_2
    high = (even - odd) * SQRT1_2
    if n % 2:
        low = np.concatenate([low, x[-1:]], axis=0)
        high = np.concatenate([high, np.zeros_like(x[-1:])], axis=0)
    return np.moveaxis(low, 0, axis), np.moveaxis(high, 0, axis)


def _synthesize(low: np.ndarray, high: np.ndarray, n: int, axis: int) -> np.ndarray:
    low = np.moveaxis(low, axis, 0)
    high = np.moveaxis(high, axis, 0)
    out = np.empty((n,) + low.shape[1:], dtype=np.result_type(low, high, np.float64))
    half = n // 2
    out[0 : 2 * half : 2] = (low[:half] + high[:half]) * SQRT1_2
    out[1 : 2 * half : 2] = (low[:half] - high[:half]) * SQRT1_2
    if n % 2:
        out[-1] = low[-1]
    return np.moveaxis(out, 0, axis)


@dataclass
class WaveletPyramid:
    """Haar sub-bands of an image.

    ``ll`` is the coarsest approximation band. ``details`` holds one
    ``(lh, hl, hh)`` triple per level, finest first, and ``shapes`` the input
    shape seen at each level so odd sizes invert exactly. Band naming: the
    first letter is the filter applied along rows, the second along columns.
    """

    ll: np.ndarray
    details: list[tuple[np.ndarray, np.ndarray, np.ndarray]]
    shapes: list[tuple[int, int]] = field(default_factory=list)

    @property
    def levels(self) -> int:
        return len(self.details)

    @property
    def lh(self) -> np.ndarray:
        return self.details[-1][0]

    @property
    def hl(self) -> np.ndarray:
        return self.details[-1][1]

    @property
    def hh(self) -> np.ndarray:
        return self.details[-1][2]

    def bands(self) -> list[np.ndarray]:
        out = [self.ll]
        for triple in self.details:
            out.extend(triple)
        return out


def _dwt_level(x: np.ndarray) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    lo, hi = _analyze(x, axis=1)  # along each row
    ll, lh = _analyze(lo, axis=0)
    hl, hh = _analyze(hi, axis=0)
    return ll, (lh, hl, hh)


def dwt2_haar(img, levels: int = 1) -> WaveletPyramid:
    """Separable orthonormal Haar transform, rows then columns, stride 2.

    Args:
        img: 2-D array, at least 2x2.
        levels: number of decompositions applied to the successive LL bands.

    Returns:
        WaveletPyramid whose bands have size ceil(M/2) x ceil(N/2) per level.
    """
    x = np.asarray(img, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"expected a 2-D image, got shape {x.shape}")
    if levels < 1:
        raise DimensionError(f"levels must be >= 1, got {levels}")
    details = []
    shapes = []
    for _ in range(levels):
        if x.shape[0] < 2 or x.shape[1] < 2:
            raise DimensionError(f"image {x.shape} too small for Haar decomposition")
        shapes.append(x.shape)
        x, triple = _dwt_level(x)
        details.append(triple)
    return WaveletPyramid(ll=x, details=details, shapes=shapes)


def idwt2_haar(pyr: WaveletPyramid) -> np.ndarray:
    """Invert :func:`dwt2_haar`."""
    x = np.asarray(pyr.ll, dtype=np.float64)
    shapes = pyr.shapes or [(2 * x.shape[0], 2 * x.shape[1])] * pyr.levels
    if len(shapes) != pyr.levels:
        raise DimensionError("pyramid shapes do not match its level count")
    for (lh, hl, hh), shape in zip(reversed(pyr.details), reversed(shapes)):
        if not (x.shape == lh.shape == hl.shape == hh.shape):
            raise DimensionError(
                f"sub-band shapes disagree: ll {x.shape}, lh {lh.shape}, hl {hl.shape}, hh {hh.shape}"
            )
        rows, cols = shape
        if (rows + 1) // 2 != x.shape[0] or (cols + 1) // 2 != x.shape[1]:
            raise DimensionError(f"sub-band shape {x.shape} cannot produce image {shape}")
        lo = _synthesize(x, lh, rows, axis=0)
        hi = _synthesize(hl, hh, rows, axis=0)
        x = _synthesize(lo, hi, cols, axis=1)
    return x


def coarse_band(img, levels: int = 1) -> np.ndarray:
    """Return the LL approximation after ``levels`` decompositions."""
    return dwt2_haar(img, levels).ll
