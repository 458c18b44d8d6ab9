"""
Random candidate sets and identification campaigns.

Every trial gets its own PCG64 stream keyed by (seed, trial index), so the
statistics do not depend on how trials are scheduled across workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .core import CoeffPair, QutritError
from .qsi import CandidateSet, DecisionMode, identify

RNG_ALGORITHM = f"numpy-{np.__version__}/PCG64/SeedSequence(seed, spawn_key=(trial,))"

RHO_RANGE = (0.5, 2.0)
PHI_RANGE = (0.0, 2 * math.pi)


@dataclass(frozen=True)
class CampaignConfig:
    k: int
    m: int
    trials: int = 20000
    seed: int = 0
    mode: DecisionMode = DecisionMode.IDEAL
    rho_range: tuple[float, float] = RHO_RANGE
    phi_range: tuple[float, float] = PHI_RANGE
    keep_per_trial: bool = False

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"K must be >= 2, got {self.k}")
        if self.m < 0:
            raise ValueError(f"M must be >= 0, got {self.m}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed must fit in 64 unsigned bits, got {self.seed}")
        lo, hi = self.rho_range
        if not 0 < lo < hi:
            raise ValueError(f"invalid rho range {self.rho_range}")
        lo, hi = self.phi_range
        if not lo < hi:
            raise ValueError(f"invalid phi range {self.phi_range}")

    def as_dict(self) -> dict:
        return {
            "k": self.k, "m": self.m, "trials": self.trials, "seed": self.seed,
            "mode": self.mode.value, "rho_range": list(self.rho_range),
            "phi_range": list(self.phi_range),
        }


@dataclass(frozen=True)
class TrialOutcome:
    loops: int
    correct: bool
    success_probability: Optional[float] = None


@dataclass(frozen=True)
class CampaignStats:
    success_rate: float
    mean_loops: float
    std_loops: float
    failures: int
    completed: int
    mean_success_probability: Optional[float] = None
    per_trial: Optional[tuple[Optional[TrialOutcome], ...]] = field(default=None, repr=False)

    def binomial_sigma(self, p: float) -> float:
        """Standard error of a success rate measured over `completed` trials."""
        return math.sqrt(p * (1 - p) / self.completed)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(trial,))))


def random_candidate_set(
    k: int,
    rng: np.random.Generator,
    rho_range: tuple[float, float] = RHO_RANGE,
    phi_range: tuple[float, float] = PHI_RANGE,
) -> CandidateSet:
    """K states with independent rho ~ U[rho_range) and phi ~ U[phi_range)."""
    if k < 2:
        raise ValueError(f"K must be >= 2, got {k}")
    rho = rng.uniform(*rho_range, size=(k, 2))
    phi = rng.uniform(*phi_range, size=(k, 2))
    z = rho * np.exp(1j * phi)
    return CandidateSet.from_coeffs(CoeffPair(complex(a), complex(b)) for a, b in z)


def run_trial(cfg: CampaignConfig, trial: int) -> Optional[TrialOutcome]:
    """One draw of (set, hidden index) and one identification; None on failure."""
    rng = trial_rng(cfg.seed, trial)
    cset = random_candidate_set(cfg.k, rng, cfg.rho_range, cfg.phi_range)
    hidden = int(rng.integers(1, cfg.k + 1))
    try:
        res = identify(cset, hidden, cfg.m, cfg.mode, rng)
    except QutritError:
        return None
    return TrialOutcome(res.loops, res.identified_index == hidden, res.success_probability)


def _run_range(cfg: CampaignConfig, start: int, stop: int) -> list:
    return [run_trial(cfg, t) for t in range(start, stop)]


def _aggregate(cfg: CampaignConfig, outcomes: Sequence[Optional[TrialOutcome]]) -> CampaignStats:
    done = [o for o in outcomes if o is not None]
    failures = len(outcomes) - len(done)
    if not done:
        nan = float("nan")
        return CampaignStats(nan, nan, nan, failures, 0)
    loops = np.array([o.loops for o in done], dtype=float)
    correct = np.array([o.correct for o in done], dtype=float)
    mean_p = None
    if cfg.mode is DecisionMode.EXPECTED:
        mean_p = float(np.mean([o.success_probability for o in done]))
    return CampaignStats(
        success_rate=float(correct.mean()),
        mean_loops=float(loops.mean()),
        std_loops=float(loops.std()),
        failures=failures,
        completed=len(done),
        mean_success_probability=mean_p,
        per_trial=tuple(outcomes) if cfg.keep_per_trial else None,
    )


def run_campaign(cfg: CampaignConfig, workers: int = 1) -> CampaignStats:
    """
    Run `cfg.trials` independent identifications and aggregate them.

    Trials are reduced in index order whatever `workers` is, so results are
    bit-identical across worker counts. Failed trials are counted, not
    averaged. std_loops is the population standard deviation.
    """
    if workers <= 1 or cfg.trials < 2 * workers:
        return _aggregate(cfg, _run_range(cfg, 0, cfg.trials))
    bounds = np.linspace(0, cfg.trials, workers + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = pool.map(_run_range, [cfg] * workers, bounds[:-1], bounds[1:])
        outcomes = [o for part in parts for o in part]
    return _aggregate(cfg, outcomes)


def derived_seed(seed: int, m: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(2 ** 32 + m,)).generate_state(1, np.uint64)[0])


def sweep_m(cfg: CampaignConfig, m_values: Sequence[int], workers: int = 1
            ) -> list[tuple[int, CampaignStats]]:
    """One campaign per M, each with a seed derived from (cfg.seed, M)."""
    return [(m, run_campaign(replace(cfg, m=m, seed=derived_seed(cfg.seed, m)), workers))
            for m in m_values]
