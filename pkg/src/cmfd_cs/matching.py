"""Block similarity, candidate matching, neighborhood verification and Q maps."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import _kernels
from .blocks import BlockGrid, R_MAX, R_MIN
from .errors import DimensionError, ParameterError

D_BOUNDS = (10.0, 40.0)
T_BOUNDS = (0.001, 0.9)

# Both blocks of a pair are displaced by the same (drow, dcol); 16 offsets
# spanning a 4-pixel radius on each axis.
NEIGHBOR_OFFSETS = tuple((dr, dc) for dr in (-4, -1, 1, 4) for dc in (-4, -1, 1, 4))
DEFAULT_WINDOW = 16
DEFAULT_QUORUM = 12


@dataclass(frozen=True)
class DetectionParams:
    """Block size R, minimum pair distance D and similarity threshold T."""

    R: int
    D: float
    T: float

    def __post_init__(self):
        if not R_MIN <= self.R <= R_MAX:
            raise ParameterError(f"R={self.R} outside [{R_MIN}, {R_MAX}]")
        if not D_BOUNDS[0] <= self.D <= D_BOUNDS[1]:
            raise ParameterError(f"D={self.D} outside {list(D_BOUNDS)}")
        if not T_BOUNDS[0] <= self.T <= T_BOUNDS[1]:
            raise ParameterError(f"T={self.T} outside {list(T_BOUNDS)}")

    def to_dict(self) -> dict:
        return {"R": int(self.R), "D": float(self.D), "T": float(self.T)}

    @classmethod
    def parse(cls, text: str) -> "DetectionParams":
        """Parse ``"R=8,D=16,T=0.6"``."""
        values = {}
        for item in text.split(","):
            key, sep, value = item.partition("=")
            if not sep:
                raise ParameterError(f"malformed parameter {item!r}; expected KEY=VALUE")
            values[key.strip().upper()] = value.strip()
        try:
            return cls(R=int(values["R"]), D=float(values["D"]), T=float(values["T"]))
        except KeyError as exc:
            raise ParameterError(f"missing parameter {exc.args[0]}") from exc
        except ValueError as exc:
            raise ParameterError(str(exc)) from exc


@dataclass
class MatchSet:
    """Matched block pairs; origins are (row, col) with ``oi`` before ``oj``."""

    oi: np.ndarray
    oj: np.ndarray
    similarity: np.ndarray
    verified: np.ndarray = field(default=None)

    def __post_init__(self):
        self.oi = np.asarray(self.oi, dtype=np.int64).reshape(-1, 2)
        self.oj = np.asarray(self.oj, dtype=np.int64).reshape(-1, 2)
        self.similarity = np.asarray(self.similarity, dtype=np.float64).reshape(-1)
        if self.verified is None:
            self.verified = np.zeros(len(self.similarity), dtype=bool)
        self.verified = np.asarray(self.verified, dtype=bool).reshape(-1)

    def __len__(self) -> int:
        return len(self.similarity)

    @property
    def shifts(self) -> np.ndarray:
        """(dx, dy) = column and row displacement from ``oi`` to ``oj``."""
        d = self.oj - self.oi
        return np.stack([d[:, 1], d[:, 0]], axis=1)

    @property
    def distances(self) -> np.ndarray:
        return np.hypot(*(self.oj - self.oi).T.astype(np.float64))

    def subset(self, keep) -> "MatchSet":
        keep = np.asarray(keep)
        return MatchSet(self.oi[keep], self.oj[keep], self.similarity[keep], self.verified[keep])

    def only_verified(self) -> "MatchSet":
        return self.subset(self.verified)

    def to_records(self) -> list[dict]:
        return [
            {
                "origin_i": [int(a), int(b)],
                "origin_j": [int(c), int(d)],
                "similarity": float(s),
                "shift": [int(dx), int(dy)],
                "verified": bool(v),
            }
            for (a, b), (c, d), s, (dx, dy), v in zip(
                self.oi, self.oj, self.similarity, self.shifts, self.verified
            )
        ]

    @classmethod
    def empty(cls) -> "MatchSet":
        return cls(np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0))


def similarity(f_i, f_j) -> float:
    """S = 1 / (1 + Euclidean distance between the feature vectors)."""
    a = np.asarray(f_i, dtype=np.float64)
    b = np.asarray(f_j, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"feature vectors must be 1-D of equal length: {a.shape} vs {b.shape}")
    stacked = np.ascontiguousarray(np.stack([a, b]))
    return float(_kernels.pair_sims(stacked, np.array([0]), np.array([1]))[0])


def pair_similarity(features: np.ndarray, a, b) -> np.ndarray:
    """Vectorized :func:`similarity` for rows ``a`` and ``b`` of ``features``."""
    feats = np.ascontiguousarray(features, dtype=np.float64)
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    return _kernels.pair_sims(feats, a, b)


def _require_features(grid: BlockGrid) -> np.ndarray:
    if grid.features is None:
        raise ValueError("grid has no features; call svd_features first")
    return grid.features


def _flat_to_origin(idx: np.ndarray, cols: int) -> np.ndarray:
    return np.stack([idx // cols, idx % cols], axis=1)


def window_candidates(grid: BlockGrid, window: int = DEFAULT_WINDOW, active=None):
    """All pairs within ``window`` positions of each other in lexicographic feature order.

    ``active`` optionally restricts the sort to a boolean subset of blocks.
    Returns flat block indices ``(i, j)`` with ``i < j`` sorted by (i, j) and
    their similarities.
    """
    feats = _require_features(grid)
    idx = np.arange(len(feats)) if active is None else np.flatnonzero(active)
    n = len(idx)
    order = idx[np.lexsort(feats[idx].T[::-1])]  # stable; primary key is feature[0]
    firsts, seconds = [], []
    for k in range(1, min(window, n - 1) + 1):
        a, b = order[:-k], order[k:]
        firsts.append(np.minimum(a, b))
        seconds.append(np.maximum(a, b))
    if not firsts:
        return np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0)
    # each unordered pair appears once, so i * n + j is a unique sort key
    key = np.sort(np.concatenate(firsts) * len(feats) + np.concatenate(seconds))
    i, j = np.divmod(key, len(feats))
    return i, j, pair_similarity(feats, i, j)


def _origin_distance(i: np.ndarray, j: np.ndarray, cols: int) -> np.ndarray:
    dr = (j // cols - i // cols).astype(np.float64)
    dc = (j % cols - i % cols).astype(np.float64)
    return np.hypot(dr, dc)


def find_matches(
    grid: BlockGrid, params: DetectionParams, window: int = DEFAULT_WINDOW, active=None
) -> MatchSet:
    """Sort-window candidate pairs with S >= T whose origins are more than D apart.

    ``active`` optionally limits matching to a boolean subset of blocks.
    """
    i, j, s = window_candidates(grid, window, active)
    keep = (s >= params.T) & (_origin_distance(i, j, grid.cols) > params.D)
    i, j = i[keep], j[keep]
    return MatchSet(_flat_to_origin(i, grid.cols), _flat_to_origin(j, grid.cols), s[keep])


def exhaustive_matches(grid: BlockGrid, params: DetectionParams, chunk: int = 256, active=None) -> MatchSet:
    """All-pairs reference matcher (quadratic; intended for small bands)."""
    feats = _require_features(grid)
    n = len(feats)
    allowed = np.ones(n, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    sq = (feats * feats).sum(axis=1)
    origins = grid.origins
    found_i, found_j, found_s = [], [], []
    for start in range(0, n, chunk):
        rows = np.arange(start, min(n, start + chunk))
        # Gram-form distances only prescreen; survivors are rescored exactly.
        d2 = sq[rows, None] + sq[None, :] - 2.0 * feats[rows] @ feats.T
        rho = np.sqrt(np.maximum(d2, 0.0))
        slack = 1e-6 * (1.0 + np.sqrt(sq[rows, None] + sq[None, :]))
        cand = (1.0 / (1.0 + np.maximum(rho - slack, 0.0))) >= params.T
        cand &= np.arange(n)[None, :] > rows[:, None]
        cand &= allowed[rows, None] & allowed[None, :]
        ii, jj = np.nonzero(cand)
        ii = rows[ii]
        dist = np.hypot(*(origins[jj] - origins[ii]).T.astype(np.float64))
        keep = dist > params.D
        ii, jj = ii[keep], jj[keep]
        s = pair_similarity(feats, ii, jj)
        ok = s >= params.T
        found_i.append(ii[ok])
        found_j.append(jj[ok])
        found_s.append(s[ok])
    i = np.concatenate(found_i) if found_i else np.zeros(0, np.int64)
    j = np.concatenate(found_j) if found_j else np.zeros(0, np.int64)
    s = np.concatenate(found_s) if found_s else np.zeros(0)
    canon = np.lexsort((j, i))
    return MatchSet(origins[i[canon]], origins[j[canon]], s[canon])


def _offset_array(offsets) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(offsets, dtype=np.int64).reshape(-1, 2))


def neighbor_similarities(
    grid: BlockGrid, oi: np.ndarray, oj: np.ndarray, offsets=NEIGHBOR_OFFSETS
) -> np.ndarray:
    """Similarity of each offset-shifted pair; NaN where an offset leaves the grid.

    Returns an array of shape (len(oi), len(offsets)).
    """
    feats = np.ascontiguousarray(_require_features(grid))
    oi = np.ascontiguousarray(np.asarray(oi, dtype=np.int64).reshape(-1, 2))
    oj = np.ascontiguousarray(np.asarray(oj, dtype=np.int64).reshape(-1, 2))
    return _kernels.neighbor_sims(feats, grid.rows, grid.cols, oi, oj, _offset_array(offsets))


def neighbor_scores(
    grid: BlockGrid, oi: np.ndarray, oj: np.ndarray, offsets=NEIGHBOR_OFFSETS, quorum: int = DEFAULT_QUORUM
) -> np.ndarray:
    """Fused ``verification_score(neighbor_similarities(...))``."""
    feats = np.ascontiguousarray(_require_features(grid))
    oi = np.ascontiguousarray(np.asarray(oi, dtype=np.int64).reshape(-1, 2))
    oj = np.ascontiguousarray(np.asarray(oj, dtype=np.int64).reshape(-1, 2))
    return _kernels.neighbor_scores(feats, grid.rows, grid.cols, oi, oj, _offset_array(offsets), int(quorum))


def required_passes(n_valid, quorum: int = DEFAULT_QUORUM, n_offsets: int = len(NEIGHBOR_OFFSETS)):
    """Quorum scaled to the in-grid offsets: ceil(quorum * n_valid / n_offsets)."""
    n_valid = np.asarray(n_valid, dtype=np.int64)
    return (quorum * n_valid + n_offsets - 1) // n_offsets


def verification_score(nsims: np.ndarray, quorum: int = DEFAULT_QUORUM) -> np.ndarray:
    """Largest T at which each pair still meets its neighbor quorum.

    The score is the k-th largest in-grid neighbor similarity, k being the
    required pass count, so ``score >= T`` is exactly "at least k neighbors
    have similarity >= T". Pairs needing zero passes score +inf.
    """
    nsims = np.asarray(nsims, dtype=np.float64)
    n = nsims.shape[0]
    if n == 0:
        return np.zeros(0)
    valid = ~np.isnan(nsims)
    need = required_passes(valid.sum(axis=1), quorum, nsims.shape[1])
    desc = -np.sort(-np.where(valid, nsims, -np.inf), axis=1)
    score = desc[np.arange(n), np.maximum(need, 1) - 1]
    return np.where(need == 0, np.inf, score)


def verify_neighborhoods(
    matches: MatchSet,
    grid: BlockGrid,
    params: DetectionParams,
    quorum: int = DEFAULT_QUORUM,
    offsets=NEIGHBOR_OFFSETS,
) -> MatchSet:
    """Flag pairs whose offset-shifted neighbors also match at threshold T."""
    if len(matches) == 0:
        return MatchSet.empty()
    nsims = neighbor_similarities(grid, matches.oi, matches.oj, offsets)
    score = verification_score(nsims, quorum)
    return MatchSet(matches.oi, matches.oj, matches.similarity, score >= params.T)


@dataclass
class DuplicateMap:
    q: np.ndarray  # uint8 {0,1}, coarse-band sized
    mask: np.ndarray  # bool, q upsampled to image size
    map: np.ndarray  # float, mask * I

    def save_mask(self, path) -> None:
        Image.fromarray(self.mask.astype(np.uint8) * 255, mode="L").save(path, format="PNG")

    def save_overlay(self, path, original, alpha: float = 0.5, color=(255, 0, 0)) -> None:
        gray = np.clip(np.asarray(original, dtype=np.float64), 0.0, 1.0) * 255.0
        rgb = np.repeat(gray[..., None], 3, axis=2)
        tint = np.asarray(color, dtype=np.float64)
        rgb[self.mask] = (1.0 - alpha) * rgb[self.mask] + alpha * tint
        Image.fromarray(np.clip(np.rint(rgb), 0, 255).astype(np.uint8), mode="RGB").save(path, format="PNG")


def save_pairs_json(path, matches: MatchSet) -> None:
    Path(path).write_text(json.dumps(matches.to_records(), indent=1) + "\n")


def upsample_mask(q: np.ndarray, shape: tuple[int, int], factor: int) -> np.ndarray:
    """Pixel-replicate ``q`` by ``factor`` and crop to ``shape``."""
    up = np.repeat(np.repeat(q, factor, axis=0), factor, axis=1)
    if up.shape[0] < shape[0] or up.shape[1] < shape[1]:
        raise DimensionError(f"upsampled Q {up.shape} smaller than image {shape}")
    return up[: shape[0], : shape[1]]


def build_map(
    matches: MatchSet, coarse_dims: tuple[int, int], original, R: int, levels: int = 1
) -> DuplicateMap:
    """Mark both R x R footprints of every verified pair, then upsample and mask I."""
    rows, cols = coarse_dims
    diff = np.zeros((rows + 1, cols + 1), dtype=np.int64)
    v = matches.only_verified() if len(matches) else matches
    for origins in (v.oi, v.oj):
        r, c = origins[:, 0], origins[:, 1]
        r2, c2 = np.minimum(r + R, rows), np.minimum(c + R, cols)
        np.add.at(diff, (r, c), 1)
        np.add.at(diff, (r2, c), -1)
        np.add.at(diff, (r, c2), -1)
        np.add.at(diff, (r2, c2), 1)
    q = (diff.cumsum(axis=0).cumsum(axis=1)[:rows, :cols] > 0).astype(np.uint8)
    img = np.asarray(original, dtype=np.float64)
    mask = upsample_mask(q, img.shape, 2**levels).astype(bool)
    return DuplicateMap(q=q, mask=mask, map=np.where(mask, img, 0.0))
