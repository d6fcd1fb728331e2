"""Elemental detection and automatic parameter estimation for single images."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .blocks import SV_FLOOR, block_features, textured_blocks
from .cuckoo import CsConfig, TraceRow, optimize
from .errors import CmfdError, DimensionError
from .fitness import (
    CLUSTER_FRACTION,
    CLUSTER_MIN,
    DECISION_P_MATCH,
    DECISION_TMB,
    FitnessReport,
    cluster_threshold,
    is_detected,
    shift_filter,
)
from .images import as_gray
from .matching import (
    D_BOUNDS,
    DEFAULT_QUORUM,
    DEFAULT_WINDOW,
    NEIGHBOR_OFFSETS,
    T_BOUNDS,
    DetectionParams,
    DuplicateMap,
    MatchSet,
    build_map,
    find_matches,
    neighbor_scores,
    verify_neighborhoods,
    window_candidates,
)
from .wavelet import coarse_band


@dataclass(frozen=True)
class DetectorConfig:
    """Every detection tunable that is not searched by the optimizer."""

    levels: int = 1
    window: int = DEFAULT_WINDOW
    quorum: int = DEFAULT_QUORUM
    offsets: tuple = NEIGHBOR_OFFSETS
    sv_floor: float = SV_FLOOR
    cluster_min: int = CLUSTER_MIN
    cluster_fraction: float = CLUSTER_FRACTION
    decision_p_match: float = DECISION_P_MATCH
    decision_tmb: int = DECISION_TMB
    early_stop_tmb: int = 20
    flat_std: float = 0.5 / 255  # blocks flatter than half an 8-bit step never match

    def active_blocks(self, grid):
        """Blocks allowed to match; the LL band carries a gain of 2 per level."""
        return textured_blocks(grid, self.flat_std * 2**self.levels)

    def decide(self, report: FitnessReport) -> bool:
        return is_detected(report, self.decision_p_match, self.decision_tmb)


class StageError(CmfdError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


class ElementalResult(NamedTuple):
    matches: MatchSet
    fitness: FitnessReport
    map: DuplicateMap


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except CmfdError as exc:
        if isinstance(exc, StageError):
            raise
        raise StageError(name, exc) from exc


def elemental_detect(img, params: DetectionParams, config: DetectorConfig | None = None) -> ElementalResult:
    """Wavelet -> tiling -> SVD features -> matching -> verification -> shift filter -> map.

    The returned MatchSet holds every candidate pair with its verification
    flag; the map covers only pairs in qualifying shift clusters.
    """
    config = config or DetectorConfig()
    img = as_gray(img)
    _check_size(img, params.R, config.levels)
    coarse = _stage("wavelet", coarse_band, img, config.levels)
    grid = _stage("features", block_features, coarse, params.R, config.sv_floor)
    candidates = _stage("matching", find_matches, grid, params, config.window, config.active_blocks(grid))
    matches = _stage("verification", verify_neighborhoods, candidates, grid, params, config.quorum, config.offsets)
    report, tmb_mask = shift_filter(matches, config.cluster_min, config.cluster_fraction)
    dmap = _stage("map", build_map, matches.subset(tmb_mask), coarse.shape, img, params.R, config.levels)
    return ElementalResult(matches, report, dmap)


def _check_size(img: np.ndarray, R: int, levels: int) -> None:
    need = 2**levels * R
    if img.shape[0] < need or img.shape[1] < need:
        raise DimensionError(f"image {img.shape} too small for R={R} at {levels} level(s); need {need}x{need}")


@dataclass
class _Table:
    """Per-block-size candidate statistics, ordered by ascending pass level."""

    level: np.ndarray  # min(similarity, verification score): pair verified iff level >= T
    code: np.ndarray  # shift bin of each candidate
    bin_norm: np.ndarray  # origin distance of each shift bin
    bin_rank: np.ndarray  # lexicographic (dx, dy) rank of each bin
    bin_shift: np.ndarray  # (dx, dy) of each bin


class ElementalDetector:
    """Cached elemental detection for one image.

    Everything that depends only on the block size (features, sort-window
    candidates, neighborhood scores) is computed once per R. Each
    :meth:`evaluate` then reduces to thresholding, so the optimizer can call
    it thousands of times. Results equal :func:`elemental_detect` exactly.
    """

    def __init__(self, img, config: DetectorConfig | None = None):
        self.config = config or DetectorConfig()
        self.img = as_gray(img)
        self.coarse = coarse_band(self.img, self.config.levels)
        self._tables: dict[int, _Table] = {}
        self.reports: dict[DetectionParams, FitnessReport] = {}

    def _table(self, R: int) -> _Table:
        if R in self._tables:
            return self._tables[R]
        cfg = self.config
        grid = _stage("features", block_features, self.coarse, R, cfg.sv_floor)
        i, j, s = _stage("matching", window_candidates, grid, cfg.window, cfg.active_blocks(grid))
        rows, cols = grid.rows, grid.cols
        dr = j // cols - i // cols
        dc = j % cols - i % cols
        keep = (s >= T_BOUNDS[0]) & (np.hypot(dr.astype(np.float64), dc.astype(np.float64)) > D_BOUNDS[0])
        i, j, s, dr, dc = i[keep], j[keep], s[keep], dr[keep], dc[keep]
        oi = np.stack([i // cols, i % cols], axis=1)
        oj = np.stack([j // cols, j % cols], axis=1)
        score = neighbor_scores(grid, oi, oj, cfg.offsets, cfg.quorum)
        level = np.minimum(s, score)
        width = 2 * cols - 1
        code = dr * width + (dc + cols - 1)
        order = np.argsort(level, kind="stable")

        bins = np.arange(rows * width)
        b_dr = bins // width
        b_dc = bins % width - (cols - 1)
        bin_shift = np.stack([b_dc, b_dr], axis=1)
        rank = np.empty(len(bins), dtype=np.int64)
        rank[np.lexsort((b_dr, b_dc))] = np.arange(len(bins))
        table = _Table(
            level=level[order],
            code=code[order],
            bin_norm=np.hypot(b_dr.astype(np.float64), b_dc.astype(np.float64)),
            bin_rank=rank,
            bin_shift=bin_shift,
        )
        self._tables[R] = table
        return table

    def evaluate(self, params: DetectionParams) -> FitnessReport:
        if params in self.reports:
            return self.reports[params]
        _check_size(self.img, params.R, self.config.levels)
        t = self._table(params.R)
        start = np.searchsorted(t.level, params.T, side="left")
        counts = np.bincount(t.code[start:], minlength=len(t.bin_norm))
        counts[t.bin_norm <= params.D] = 0
        n_verified = int(counts.sum())
        if n_verified == 0:
            report = FitnessReport.from_counts(0, 0)
        else:
            thr = cluster_threshold(n_verified, self.config.cluster_min, self.config.cluster_fraction)
            tmb = int(counts[counts >= thr].sum())
            top = counts.max()
            tied = np.flatnonzero(counts == top)
            best_bin = tied[np.argmin(t.bin_rank[tied])]
            dx, dy = t.bin_shift[best_bin]
            report = FitnessReport.from_counts(tmb, n_verified - tmb, (int(dx), int(dy)))
        self.reports[params] = report
        return report

    def p_match(self, params: DetectionParams) -> float:
        return self.evaluate(params).p_match

    def detect(self, params: DetectionParams) -> ElementalResult:
        return elemental_detect(self.img, params, self.config)


@dataclass
class DetectionReport:
    best_params: DetectionParams
    fitness: FitnessReport
    map: DuplicateMap
    detected: bool
    evals_used: int
    wall_time: float
    matches: MatchSet | None = None
    trace: list[TraceRow] = field(default_factory=list)

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "detected": bool(self.detected),
            "best_params": self.best_params.to_dict(),
            "fitness": self.fitness.to_dict(),
            "evals_used": int(self.evals_used),
            "q_ones": int(self.map.q.sum()),
            "mask_pixels": int(self.map.mask.sum()),
        }
        if include_timing:
            d["wall_time"] = round(float(self.wall_time), 3)
        return d


def detect_auto(
    img,
    cfg: CsConfig | None = None,
    config: DetectorConfig | None = None,
    warm_start=None,
) -> DetectionReport:
    """Search (R, D, T) with Cuckoo Search for the highest P_match, then rerun at the winner."""
    started = time.perf_counter()
    cfg = cfg or CsConfig()
    detector = ElementalDetector(img, config)
    config = detector.config

    def stop(params: DetectionParams, fitness: float) -> bool:
        report = detector.reports.get(params)
        return fitness >= 1.0 and report is not None and report.tmb >= config.early_stop_tmb

    result = optimize(detector.p_match, cfg, warm_start=warm_start, stop=stop)
    final = detector.detect(result.params)
    if final.fitness.p_match != result.fitness:
        raise CmfdError(
            f"cached fitness {result.fitness!r} disagrees with recomputed {final.fitness.p_match!r}"
        )
    return DetectionReport(
        best_params=result.params,
        fitness=final.fitness,
        map=final.map,
        detected=config.decide(final.fitness),
        evals_used=result.evals_used,
        wall_time=time.perf_counter() - started,
        matches=final.matches,
        trace=result.trace,
    )
