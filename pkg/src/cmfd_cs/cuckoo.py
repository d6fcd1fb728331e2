"""Cuckoo Search over the (R, D, T) detection-parameter box.

Proposals use Levy flights drawn with Mantegna's algorithm. A fixed seed
reproduces the whole run, including the trace.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .blocks import R_MAX, R_MIN
from .errors import ParameterError
from .matching import D_BOUNDS, T_BOUNDS, DetectionParams

log = logging.getLogger(__name__)

LOWER = np.array([R_MIN, D_BOUNDS[0], T_BOUNDS[0]], dtype=np.float64)
UPPER = np.array([R_MAX, D_BOUNDS[1], T_BOUNDS[1]], dtype=np.float64)


def decode(position) -> DetectionParams:
    """Map a continuous nest position onto valid detection parameters."""
    p = np.clip(np.asarray(position, dtype=np.float64), LOWER, UPPER)
    R = int(min(max(math.floor(p[0] + 0.5), R_MIN), R_MAX))
    return DetectionParams(R=R, D=float(p[1]), T=float(p[2]))


@dataclass
class CsConfig:
    n_nests: int = 50
    p_a: float = 0.25
    alpha: tuple[float, ...] | None = None  # per-dimension; None -> 0.01 * (upper - lower)
    lam: float = 2.5  # Mantegna beta = 1.5
    max_evals: int = 1500
    max_generations: int | None = None  # N-rounds mode when set
    seed: int = 0
    variant: str = "unbiased"  # or "biased"
    stop_fitness: float = 1.0

    def __post_init__(self):
        if not 1.0 < self.lam <= 3.0:
            raise ParameterError(f"Levy exponent lambda={self.lam} outside (1, 3]")
        if not 0.0 <= self.p_a <= 1.0:
            raise ParameterError(f"p_a={self.p_a} outside [0, 1]")
        if self.n_nests < 2:
            raise ParameterError("n_nests must be >= 2")
        if self.max_evals < self.n_nests:
            raise ParameterError("max_evals must be >= n_nests")
        if self.variant not in ("biased", "unbiased"):
            raise ParameterError(f"unknown proposal variant {self.variant!r}")
        if self.alpha is not None and len(self.alpha) != len(LOWER):
            raise ParameterError(f"alpha needs {len(LOWER)} components")

    @property
    def step_scale(self) -> np.ndarray:
        if self.alpha is None:
            return 0.01 * (UPPER - LOWER)
        return np.asarray(self.alpha, dtype=np.float64)


@dataclass
class Nest:
    position: np.ndarray
    fitness: float | None = None

    @property
    def decoded(self) -> DetectionParams:
        return decode(self.position)


@dataclass
class TraceRow:
    generation: int
    evals_used: int
    best_fitness: float
    best_params: DetectionParams


@dataclass
class CsResult:
    params: DetectionParams
    fitness: float
    trace: list[TraceRow] = field(default_factory=list)
    evals_used: int = 0

    def __iter__(self):
        # unpacks as (params, fitness, trace)
        return iter((self.params, self.fitness, self.trace))


def mantegna_sigma(beta: float) -> float:
    num = math.gamma(1 + beta) * math.sin(math.pi * beta / 2)
    den = math.gamma((1 + beta) / 2) * beta * 2 ** ((beta - 1) / 2)
    return (num / den) ** (1 / beta)


def levy_step(rng: np.random.Generator, lam: float, dim: int) -> np.ndarray:
    """Heavy-tailed step u / |v|**(1/beta) with beta = lam - 1.

    The step density decays like |s|**(-lam) in the tails.
    """
    if not 1.0 < lam <= 3.0:
        raise ParameterError(f"Levy exponent lambda={lam} outside (1, 3]")
    beta = lam - 1.0
    u = rng.normal(0.0, mantegna_sigma(beta), size=dim)
    v = rng.normal(0.0, 1.0, size=dim)
    return u / np.abs(v) ** (1.0 / beta)


def propose(nest: Nest, best: Nest, cfg: CsConfig, rng: np.random.Generator) -> Nest:
    """Levy-flight cuckoo from ``nest``, clamped to the search box.

    ``unbiased``: old + alpha * L. ``biased``: old + alpha * L * (old - best),
    which leaves the best nest in place.
    """
    step = cfg.step_scale * levy_step(rng, cfg.lam, len(nest.position))
    if cfg.variant == "biased":
        step = step * (nest.position - best.position)
    return Nest(np.clip(nest.position + step, LOWER, UPPER))


def random_positions(rng: np.random.Generator, n: int) -> np.ndarray:
    return LOWER + rng.random((n, len(LOWER))) * (UPPER - LOWER)


def optimize(
    objective: Callable[[DetectionParams], float],
    cfg: CsConfig | None = None,
    warm_start=None,
    stop: Callable[[DetectionParams, float], bool] | None = None,
) -> CsResult:
    """Maximize ``objective`` over the detection-parameter box.

    Each generation lays one cuckoo per nest; a cuckoo replaces a uniformly
    chosen nest when strictly fitter. The worst ceil(p_a * n) nests (never the
    best) are then rebuilt uniformly at random. Fitness values are memoized on
    the decoded parameters and cache hits do not consume budget.

    Args:
        objective: maps DetectionParams to a fitness; exceptions count as an
            evaluation with fitness 0.
        cfg: optimizer settings.
        warm_start: optional positions (or DetectionParams) seeding the
            initial population; the rest is drawn uniformly.
        stop: optional predicate on the incumbent ``(params, fitness)`` that
            ends the search early.

    Returns:
        CsResult, unpackable as ``(params, fitness, trace)``.
    """
    cfg = cfg or CsConfig()
    rng = np.random.default_rng(cfg.seed)
    cache: dict[DetectionParams, float] = {}
    evals = 0

    def evaluate(position: np.ndarray) -> float | None:
        nonlocal evals
        params = decode(position)
        if params in cache:
            return cache[params]
        if evals >= cfg.max_evals:
            return None
        evals += 1
        try:
            value = float(objective(params))
        except Exception as exc:  # objective failures must not abort the search
            log.warning("objective failed at %s: %s", params, exc)
            value = 0.0
        cache[params] = value
        return value

    positions = random_positions(rng, cfg.n_nests)
    if warm_start is not None:
        for k, w in enumerate(list(warm_start)[: cfg.n_nests]):
            if isinstance(w, DetectionParams):
                w = (w.R, w.D, w.T)
            positions[k] = np.clip(np.asarray(w, dtype=np.float64), LOWER, UPPER)
    nests = [Nest(p, evaluate(p)) for p in positions]

    def best_index() -> int:
        # first occurrence of the maximum keeps ties deterministic
        return int(np.argmax([n.fitness for n in nests]))

    def record(generation: int) -> None:
        b = nests[best_index()]
        trace.append(TraceRow(generation, evals, b.fitness, b.decoded))

    trace: list[TraceRow] = []
    record(0)
    n = cfg.n_nests
    n_abandon = math.ceil(cfg.p_a * n)
    generation = 0
    while evals < cfg.max_evals:
        if cfg.max_generations is not None and generation >= cfg.max_generations:
            break
        b = nests[best_index()]
        if b.fitness >= cfg.stop_fitness or (stop is not None and stop(b.decoded, b.fitness)):
            break
        generation += 1
        evals_before = evals

        for i in range(n):
            best = nests[best_index()]
            cuckoo = propose(nests[i], best, cfg, rng)
            value = evaluate(cuckoo.position)
            if value is None:
                break
            cuckoo.fitness = value
            j = int(rng.integers(n))
            if value > nests[j].fitness:
                nests[j] = cuckoo

        if n_abandon and evals < cfg.max_evals:
            keep = best_index()
            order = [k for k in np.argsort([nd.fitness for nd in nests], kind="stable") if k != keep]
            fresh = random_positions(rng, n_abandon)
            for k, pos in zip(order[:n_abandon], fresh):
                value = evaluate(pos)
                if value is None:
                    break
                nests[k] = Nest(pos, value)

        record(generation)
        if evals == evals_before:
            break  # nothing new could be evaluated

    b = nests[best_index()]
    return CsResult(params=b.decoded, fitness=b.fitness, trace=trace, evals_used=evals)


def random_search(objective: Callable[[DetectionParams], float], n_evals: int, seed: int = 0):
    """Uniform random baseline with the same box and budget."""
    rng = np.random.default_rng(seed)
    best_p, best_f = None, -math.inf
    for pos in random_positions(rng, n_evals):
        p = decode(pos)
        f = float(objective(p))
        if f > best_f:
            best_p, best_f = p, f
    return best_p, best_f


def write_trace_csv(path, trace: list[TraceRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["generation", "evals_used", "best_fitness", "best_R", "best_D", "best_T"])
        for row in trace:
            p = row.best_params
            w.writerow([row.generation, row.evals_used, repr(row.best_fitness), p.R, repr(p.D), repr(p.T)])
