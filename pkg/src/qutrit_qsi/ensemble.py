"""
Finite-ensemble bookkeeping for the protocol.

Each elementary step takes four identical qutrits and succeeds, leaving one,
with the single-step survival probability at the current coefficients. A
leftover of fewer than four systems is discarded. Group outcomes are sampled
as one binomial draw per iteration.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .core import CoeffPair
from .protocol import iterate_map

GROUP = 4
EXACT_MAX_M = 3
# beyond this the first-step pmf window gets too wide for the exact recursion
EXACT_MAX_SIZE = 10 ** 10
_PMF_FLOOR = 1e-30


@dataclass(frozen=True)
class IterationRecord:
    attempts: int
    survivors: int
    step_survival_prob: float
    leftover: int


@dataclass(frozen=True)
class EnsembleRun:
    initial_size: int
    per_iteration: tuple[IterationRecord, ...]

    @property
    def final_survivors(self) -> int:
        return self.per_iteration[-1].survivors if self.per_iteration else self.initial_size


@dataclass(frozen=True)
class ResourceEstimate:
    m: int
    per_step_probs: tuple[float, ...]
    cumulative_survival: float
    expected_yield_fraction: float
    required_size_for_confidence: int
    confidence: float
    method: str


def simulate_ensemble(c: CoeffPair, m: int, initial_size: int,
                      rng: np.random.Generator | int | None = None) -> EnsembleRun:
    if initial_size < 0:
        raise ValueError(f"initial size must be non-negative, got {initial_size}")
    if initial_size < GROUP ** m:
        warnings.warn(f"initial size {initial_size} < 4**{m}; the run cannot finish "
                      "with a survivor", stacklevel=2)
    rng = np.random.default_rng(rng)
    probs = iterate_map(c, m).per_step_survival
    survivors = initial_size
    records = []
    for p in probs:
        attempts, leftover = divmod(survivors, GROUP)
        survivors = int(rng.binomial(attempts, p))
        records.append(IterationRecord(attempts, survivors, p, leftover))
    return EnsembleRun(initial_size, tuple(records))


@dataclass(frozen=True)
class SurvivorDistribution:
    """pmf of the final survivor count, on offset, offset+1, ..."""

    offset: int
    pmf: np.ndarray

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + len(self.pmf))

    @property
    def mean(self) -> float:
        return float(np.dot(self.support, self.pmf))

    @property
    def std(self) -> float:
        mu = self.mean
        return float(math.sqrt(np.dot((self.support - mu) ** 2, self.pmf)))

    def prob_zero(self) -> float:
        return float(self.pmf[0]) if self.offset == 0 else 0.0


def _binomial_step(offset: int, pmf: np.ndarray, p: float) -> tuple[int, np.ndarray]:
    s = np.arange(offset, offset + len(pmf))
    attempts = s // GROUP
    a_lo, a_hi = int(attempts[0]), int(attempts[-1])
    weight = np.bincount(attempts - a_lo, weights=pmf)

    spread = 12 * math.sqrt(max(a_hi * p * (1 - p), 1.0))
    k_lo = max(0, int(a_lo * p - spread))
    k_hi = min(a_hi, int(math.ceil(a_hi * p + spread)))
    k = np.arange(k_lo, k_hi + 1)
    out = np.zeros(len(k))
    a_all = np.arange(a_lo, a_hi + 1)
    for start in range(0, len(a_all), 512):
        a = a_all[start:start + 512]
        out += weight[start:start + 512] @ stats.binom.pmf(k[None, :], a[:, None], p)

    keep = np.nonzero(out > _PMF_FLOOR * out.max())[0]
    lo, hi = keep[0], keep[-1]
    return k_lo + int(lo), out[lo:hi + 1]


def survivor_distribution(per_step_probs: Sequence[float], initial_size: int) -> SurvivorDistribution:
    """Exact final-survivor pmf under the independent-group binomial model."""
    offset, pmf = initial_size, np.ones(1)
    for p in per_step_probs:
        offset, pmf = _binomial_step(offset, pmf, p)
    return SurvivorDistribution(offset, pmf)


def _prob_any_survivor(per_step_probs: Sequence[float], size: int) -> float:
    return 1.0 - survivor_distribution(per_step_probs, size).prob_zero()


def estimate_resources(c: CoeffPair, m: int, confidence: float = 0.95) -> ResourceEstimate:
    """
    Survival bookkeeping along the trajectory of `c`, plus the smallest
    ensemble that leaves at least one output system with probability
    `confidence`.

    For M <= 3 the size is found by bisection on the exact binomial
    recursion ("exact-binomial"); beyond that, or for astronomically large
    ensembles, the final count is taken as Poisson with mean N * yield
    ("poisson"). The result is never below 4**M.
    """
    if not 0 < confidence < 1:
        raise ValueError(f"confidence must be in (0, 1), got {confidence}")
    traj = iterate_map(c, m)
    probs = traj.per_step_survival
    yield_fraction = math.prod(p / GROUP for p in probs)
    floor_size = GROUP ** m

    poisson_size = max(floor_size, math.ceil(-math.log1p(-confidence) / yield_fraction))
    if m > EXACT_MAX_M or poisson_size > EXACT_MAX_SIZE:
        return ResourceEstimate(m, probs, traj.cumulative_survival, yield_fraction,
                                poisson_size, confidence, "poisson")

    lo, hi = floor_size - 1, floor_size
    while _prob_any_survivor(probs, hi) < confidence:
        lo, hi = hi, 2 * hi
    # invariant: P(lo) < confidence <= P(hi); P is non-decreasing in size
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _prob_any_survivor(probs, mid) >= confidence:
            hi = mid
        else:
            lo = mid
    return ResourceEstimate(m, probs, traj.cumulative_survival, yield_fraction,
                            hi, confidence, "exact-binomial")
