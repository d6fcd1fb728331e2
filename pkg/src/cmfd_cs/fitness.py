"""Shift-consistency filtering, the P_match fitness and corpus scoring."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ValidationError
from .matching import MatchSet

PHI_FLOOR = 10
CLUSTER_MIN = 3
CLUSTER_FRACTION = 0.10
DECISION_P_MATCH = 0.5
DECISION_TMB = 5


def phi(mmb: int) -> int:
    """Mismatch coefficient: MMB when above 10, otherwise 10."""
    return mmb if mmb > PHI_FLOOR else PHI_FLOOR


def p_match(tmb: int, mmb: int) -> float:
    """Probability of real matching, TMB / (TMB + phi(MMB))."""
    if tmb < 0 or mmb < 0:
        raise ValueError("block counts must be non-negative")
    return tmb / (tmb + phi(mmb))


@dataclass(frozen=True)
class FitnessReport:
    tmb: int
    mmb: int
    phi: int
    p_match: float
    dominant_shift: tuple[int, int] | None  # (dx, dy)

    @classmethod
    def from_counts(cls, tmb: int, mmb: int, dominant_shift=None) -> "FitnessReport":
        return cls(int(tmb), int(mmb), phi(int(mmb)), p_match(int(tmb), int(mmb)), dominant_shift)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dominant_shift"] = list(self.dominant_shift) if self.dominant_shift is not None else None
        return d


def cluster_threshold(n_verified: int, minimum: int = CLUSTER_MIN, fraction: float = CLUSTER_FRACTION) -> float:
    return max(minimum, fraction * n_verified)


def shift_clusters(shifts: np.ndarray, minimum: int = CLUSTER_MIN, fraction: float = CLUSTER_FRACTION):
    """Group (dx, dy) rows by exact value.

    Returns ``(tmb_mask, dominant)`` where ``tmb_mask`` flags rows whose
    cluster reaches ``max(minimum, fraction * len(shifts))`` and ``dominant``
    is the most populous shift (smallest shift wins ties), or ``None``.
    """
    shifts = np.asarray(shifts, dtype=np.int64).reshape(-1, 2)
    n = len(shifts)
    if n == 0:
        return np.zeros(0, dtype=bool), None
    uniq, inverse, counts = np.unique(shifts, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    big = counts >= cluster_threshold(n, minimum, fraction)
    # np.unique sorts rows lexicographically, so argmax picks the smallest tied shift
    top = int(np.argmax(counts))
    return big[inverse], (int(uniq[top, 0]), int(uniq[top, 1]))


def shift_filter(
    matches: MatchSet, minimum: int = CLUSTER_MIN, fraction: float = CLUSTER_FRACTION
) -> tuple[FitnessReport, np.ndarray]:
    """Split verified pairs into true matches (populous shift clusters) and mismatches.

    Returns the report and a boolean mask over ``matches`` marking TMB pairs.
    """
    verified = np.asarray(matches.verified, dtype=bool)
    tmb_mask = np.zeros(len(matches), dtype=bool)
    if not verified.any():
        return FitnessReport.from_counts(0, 0), tmb_mask
    in_cluster, dominant = shift_clusters(matches.shifts[verified], minimum, fraction)
    tmb_mask[np.flatnonzero(verified)[in_cluster]] = True
    tmb = int(in_cluster.sum())
    return FitnessReport.from_counts(tmb, int(verified.sum()) - tmb, dominant), tmb_mask


def is_detected(report: FitnessReport, min_p_match: float = DECISION_P_MATCH, min_tmb: int = DECISION_TMB) -> bool:
    """Image-level decision: best P_match and TMB both clear their floors."""
    return report.p_match >= min_p_match and report.tmb >= min_tmb


def mask_iou(pred, truth) -> float:
    pred = np.asarray(pred, dtype=bool)
    truth = np.asarray(truth, dtype=bool)
    union = np.logical_or(pred, truth).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(pred, truth).sum() / union)


@dataclass(frozen=True)
class CorpusScore:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    mean_iou: float
    precision_defined: bool = True
    recall_defined: bool = True

    def to_dict(self) -> dict:
        return asdict(self)


def score_corpus(results) -> CorpusScore:
    """Image-level precision and recall plus mean IoU over forged images.

    ``results`` is an iterable of ``(detected, is_forged, iou)`` with ``iou``
    present (not None) exactly for forged images. An undefined ratio is
    reported as 0 with the matching ``*_defined`` flag cleared.
    """
    results = list(results)
    if not results:
        raise ValidationError("cannot score an empty corpus")
    tp = fp = fn = tn = 0
    ious = []
    for detected, forged, iou in results:
        if forged:
            if iou is None:
                raise ValidationError("forged image is missing its IoU")
            ious.append(float(iou))
            if detected:
                tp += 1
            else:
                fn += 1
        else:
            if iou is not None:
                raise ValidationError("authentic image must not carry an IoU")
            if detected:
                fp += 1
            else:
                tn += 1
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    mean_iou = float(math.fsum(ious) / len(ious)) if ious else 0.0
    return CorpusScore(tp, fp, fn, tn, precision, recall, mean_iou, tp + fp > 0, tp + fn > 0)
