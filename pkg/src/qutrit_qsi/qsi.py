"""
Identification of an unknown qutrit state among K classically known ones.

Each loop splits the candidate set by the sign of |z1| - |z2|, rotating all
candidates (and the unknown state) with W(theta) first when the split would
be one-sided. The nonlinear protocol then drives the unknown state toward
|1> or |2>, a measurement picks the matching half, and the loop repeats
until one candidate is left.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .core import EPS_ZERO, CoeffPair, QutritError
from .protocol import (
    AttractorLabel,
    ZeroCoefficient,
    branch_probabilities,
    classify,
)

EPS_THETA = 1e-9

_SQRT2_INV = 1 / math.sqrt(2)

RngLike = Union[np.random.Generator, int, None]


class Indeterminate(QutritError):
    """The equalizing angle is undefined (tan 2theta = 0/0)."""


class DegenerateThetas(QutritError):
    """Two candidates share the same equalizing angle."""


class NonConvergence(QutritError):
    """The identification loop failed to shrink the candidate set."""


class OpKind(enum.Enum):
    W_ROTATION = "W"
    U2_SWAP = "u2"
    R_ROTATION = "R"


@dataclass(frozen=True)
class AppliedOp:
    kind: OpKind
    loop_number: int
    theta: Optional[float] = None

    def apply(self, c: CoeffPair) -> CoeffPair:
        z1, z2 = c.z1, c.z2
        if self.kind is OpKind.W_ROTATION:
            co, si = math.cos(self.theta), math.sin(self.theta)
            return CoeffPair(co * z1 + si * z2, -si * z1 + co * z2)
        if self.kind is OpKind.U2_SWAP:
            # |0> <-> |1>, then rescale so the |0> amplitude is 1 again
            if abs(z1) <= EPS_ZERO:
                raise ZeroCoefficient(f"u2 swap of ({z1}, {z2}) leaves no |0> component")
            return CoeffPair(1 / z1, z2 / z1)
        return CoeffPair((1j * z1 + z2) * _SQRT2_INV, (-z1 - 1j * z2) * _SQRT2_INV)

    def __str__(self):
        if self.kind is OpKind.W_ROTATION:
            return f"W({self.theta:.17g})@{self.loop_number}"
        return f"{self.kind.value}@{self.loop_number}"


Entry = tuple[int, CoeffPair]


@dataclass(frozen=True)
class CandidateSet:
    """Candidates as (original 1-based index, current coefficients)."""

    entries: tuple[Entry, ...]
    applied_ops: tuple[AppliedOp, ...] = ()

    def __post_init__(self):
        entries = tuple((int(i), c) for i, c in self.entries)
        indices = [i for i, _ in entries]
        if len(set(indices)) != len(indices):
            raise ValueError(f"duplicate candidate indices {indices}")
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "applied_ops", tuple(self.applied_ops))

    @classmethod
    def from_coeffs(cls, coeffs: Iterable[CoeffPair]) -> "CandidateSet":
        return cls(tuple((i, c) for i, c in enumerate(coeffs, start=1)))

    def __len__(self):
        return len(self.entries)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(i for i, _ in self.entries)

    @property
    def coeffs(self) -> tuple[CoeffPair, ...]:
        return tuple(c for _, c in self.entries)

    def lookup(self, index: int) -> CoeffPair:
        for i, c in self.entries:
            if i == index:
                return c
        raise KeyError(index)

    def transformed(self, op: AppliedOp) -> "CandidateSet":
        return CandidateSet(tuple((i, op.apply(c)) for i, c in self.entries),
                            self.applied_ops + (op,))

    def restricted(self, entries: Sequence[Entry]) -> "CandidateSet":
        return CandidateSet(tuple(entries), self.applied_ops)


@dataclass(frozen=True)
class Partition:
    s_plus: tuple[Entry, ...]
    s_minus: tuple[Entry, ...]
    boundary: tuple[Entry, ...]

    @property
    def is_split(self) -> bool:
        """Both halves nonempty and nothing on the |z1| = |z2| circle."""
        return bool(self.s_plus) and bool(self.s_minus) and not self.boundary


class DecisionMode(enum.Enum):
    IDEAL = "ideal"
    SAMPLED = "sampled"
    EXPECTED = "expected"


@dataclass(frozen=True)
class LoopRecord:
    loop: int
    theta_applied: Optional[float]
    u2_applied: int
    r_applied: bool
    m_used: int
    branch_probs: tuple[float, float]
    branch_taken: AttractorLabel
    set_sizes: tuple[int, int]
    proportional_after_u2: Optional[tuple[tuple[int, int], ...]] = None


@dataclass(frozen=True)
class IdentificationResult:
    identified_index: int
    loops: int
    transcript: tuple[LoopRecord, ...]
    final_set: CandidateSet
    hidden_final: CoeffPair
    success_probability: Optional[float] = None

    @property
    def applied_ops(self) -> tuple[AppliedOp, ...]:
        return self.final_set.applied_ops


def partition(cset: CandidateSet) -> Partition:
    groups = {label: [] for label in AttractorLabel}
    for entry in cset.entries:
        groups[classify(entry[1])].append(entry)
    return Partition(tuple(groups[AttractorLabel.PLUS]),
                     tuple(groups[AttractorLabel.MINUS]),
                     tuple(groups[AttractorLabel.BOUNDARY]))


def theta_equalize(c: CoeffPair) -> float:
    """
    Angle in (-pi/4, pi/4] for which W(theta) makes |z1'| == |z2'|.

    Solves tan 2theta = (|z2|^2 - |z1|^2) / (2 Re(z1 conj(z2))).
    """
    a1, a2 = abs(c.z1) ** 2, abs(c.z2) ** 2
    num = a2 - a1
    den = 2 * (c.z1 * c.z2.conjugate()).real
    tol = EPS_ZERO * max(a1 + a2, EPS_ZERO)
    if abs(num) <= tol and abs(den) <= tol:
        raise Indeterminate(f"no equalizing angle for ({c.z1}, {c.z2}): 0/0")
    theta = 0.5 * math.atan2(num, den)
    if theta > math.pi / 4:
        theta -= math.pi / 2
    elif theta <= -math.pi / 4:
        theta += math.pi / 2
    return theta


def choose_theta(side: Sequence[CoeffPair], eps_theta: float = EPS_THETA) -> float:
    """
    Rotation angle that splits a one-sided set as evenly as possible.

    The equalizing angles theta_1 < ... < theta_D of the members are sorted
    and d = (#positive) - (#negative) selects the rule below. A member flips
    sides under W(t) exactly when t lies beyond its own angle, away from 0.
    The |d| <= 1 rule takes precedence so D = 1 never indexes theta_0.
    """
    if not side:
        raise ValueError("choose_theta needs at least one candidate")
    thetas = sorted(theta_equalize(c) for c in side)
    for lo, hi in zip(thetas, thetas[1:]):
        if hi - lo <= eps_theta:
            raise DegenerateThetas(f"equalizing angles coincide near {lo:.12g}")
    size = len(thetas)
    d = sum(t > 0 for t in thetas) - sum(t < 0 for t in thetas)

    def mid(k: int) -> float:
        # 1-based: average of theta_k and theta_{k+1}
        return (thetas[k - 1] + thetas[k]) / 2

    if -1 <= d <= 1:
        return (thetas[0] - math.pi / 4) / 2
    if abs(d) == size:
        return mid(size // 2)
    if d <= -2:
        return mid(math.floor(-d / 2))
    return mid(math.floor(size - d / 2))


def detect_proportional(coeffs: Union[CandidateSet, Sequence[CoeffPair]]) -> list[tuple[int, int]]:
    """Position pairs (l, m), l < m, whose coefficient vectors are parallel."""
    if isinstance(coeffs, CandidateSet):
        coeffs = coeffs.coeffs
    found = []
    for m in range(len(coeffs)):
        for l in range(m):
            a, b = coeffs[l], coeffs[m]
            cross = b.z1 * a.z2 - b.z2 * a.z1
            scale = math.hypot(abs(a.z1), abs(a.z2)) * math.hypot(abs(b.z1), abs(b.z2))
            if abs(cross) <= EPS_ZERO * max(scale, 1.0):
                found.append((l, m))
    return found


def apply_u2_remedy(cset: CandidateSet, hidden: CoeffPair, loop_number: int = 0
                    ) -> tuple[CandidateSet, CoeffPair]:
    op = AppliedOp(OpKind.U2_SWAP, loop_number)
    return cset.transformed(op), op.apply(hidden)


def replay_ops(c: CoeffPair, ops: Iterable[AppliedOp]) -> CoeffPair:
    for op in ops:
        c = op.apply(c)
    return c


def _search_theta(coeffs: Sequence[CoeffPair]) -> float:
    """Fallback for sets with boundary members: scan the gaps between angles."""
    angles = []
    for c in coeffs:
        try:
            angles.append(theta_equalize(c))
        except Indeterminate:
            pass
    angles = sorted(set(angles))
    if not angles:
        raise Indeterminate("no member has a defined equalizing angle")
    candidates = [(angles[0] - math.pi / 4) / 2, (angles[-1] + math.pi / 4) / 2]
    candidates += [(lo + hi) / 2 for lo, hi in zip(angles, angles[1:])]
    best, best_score = None, 0
    for theta in candidates:
        op = AppliedOp(OpKind.W_ROTATION, 0, theta)
        labels = [classify(op.apply(c)) for c in coeffs]
        if AttractorLabel.BOUNDARY in labels:
            continue
        score = min(labels.count(AttractorLabel.PLUS), labels.count(AttractorLabel.MINUS))
        if score > best_score:
            best, best_score = theta, score
    if best is None:
        raise Indeterminate("no W rotation separates the set")
    return best


@dataclass
class _Prepared:
    cset: CandidateSet
    hidden: CoeffPair
    part: Partition
    theta: Optional[float] = None
    u2_count: int = 0
    r_applied: bool = False
    proportional_after_u2: Optional[tuple[tuple[int, int], ...]] = None


def _prepare_split(cset: CandidateSet, hidden: CoeffPair, loop: int) -> _Prepared:
    """Apply u2 / R / W(theta) as needed until the set splits cleanly."""
    prep = _Prepared(cset, hidden, partition(cset))
    max_u2 = len(cset)
    while not prep.part.is_split:
        part = prep.part
        try:
            if part.boundary:
                theta = _search_theta(prep.cset.coeffs)
            else:
                side = part.s_plus or part.s_minus
                theta = choose_theta([c for _, c in side])
        except DegenerateThetas:
            if prep.u2_count >= max_u2:
                raise DegenerateThetas(
                    f"equalizing angles still coincide after {prep.u2_count} u2 swaps") from None
            prep.cset, prep.hidden = apply_u2_remedy(prep.cset, prep.hidden, loop)
            prep.u2_count += 1
            prep.proportional_after_u2 = tuple(detect_proportional(prep.cset))
            prep.part = partition(prep.cset)
            continue
        except Indeterminate:
            if prep.r_applied:
                raise
            op = AppliedOp(OpKind.R_ROTATION, loop)
            prep.cset, prep.hidden = prep.cset.transformed(op), op.apply(prep.hidden)
            prep.r_applied = True
            prep.part = partition(prep.cset)
            continue

        op = AppliedOp(OpKind.W_ROTATION, loop, theta)
        rotated = prep.cset.transformed(op)
        rotated_part = partition(rotated)
        if not rotated_part.is_split and not part.boundary:
            # rounding put a member on the boundary; take the gap scan instead
            theta = _search_theta(prep.cset.coeffs)
            op = AppliedOp(OpKind.W_ROTATION, loop, theta)
            rotated = prep.cset.transformed(op)
            rotated_part = partition(rotated)
        if not rotated_part.is_split:
            raise NonConvergence(f"W({theta:.6g}) failed to split the set in loop {loop}")
        prep.cset, prep.hidden = rotated, op.apply(prep.hidden)
        prep.theta = theta
        prep.part = rotated_part
    return prep


def _decision_probs(hidden: CoeffPair, m: int, uninformed_at_zero: bool) -> tuple[float, float]:
    if m == 0 and uninformed_at_zero:
        return 0.5, 0.5
    return branch_probabilities(hidden, m)


def identify(
    cset: CandidateSet,
    hidden_index: int,
    m: int,
    mode: DecisionMode = DecisionMode.IDEAL,
    rng: RngLike = None,
    *,
    uninformed_at_zero: bool = True,
) -> IdentificationResult:
    """
    Run the identification loop for the candidate with original index
    `hidden_index` (1-based) playing the unknown state.

    IDEAL follows the unknown state's true side every loop. SAMPLED draws the
    side from the |1>-vs-|2> outcome distribution after `m` protocol steps
    (outcome |0> is treated as inconclusive and redrawn). EXPECTED follows
    the true side and multiplies the probability of measuring it; since a
    wrong turn can never lead back to the right answer, that product is the
    full decision-tree success probability.

    With `m == 0` and `uninformed_at_zero`, no protocol step is run and both
    outcomes are equally likely, so averaging over the hidden index gives 1/K.
    """
    if len(cset) < 2:
        raise ValueError(f"need at least 2 candidates, got {len(cset)}")
    if m < 0:
        raise ValueError(f"iteration count must be non-negative, got {m}")
    try:
        hidden = cset.lookup(hidden_index)
    except KeyError:
        raise ValueError(f"hidden index {hidden_index} not in {cset.indices}") from None
    rng = np.random.default_rng(rng)

    k = len(cset)
    current = cset
    transcript = []
    success = 1.0
    while len(current) > 1:
        loop = len(transcript) + 1
        if loop > k:
            raise NonConvergence(f"exceeded {k} loops")
        prep = _prepare_split(current, hidden, loop)
        current, hidden, part = prep.cset, prep.hidden, prep.part

        p_plus, p_minus = _decision_probs(hidden, m, uninformed_at_zero)
        if mode is DecisionMode.SAMPLED:
            branch = AttractorLabel.PLUS if rng.random() < p_plus else AttractorLabel.MINUS
        else:
            branch = classify(hidden)
            if branch is AttractorLabel.BOUNDARY:
                raise NonConvergence(f"unknown state sits on the boundary in loop {loop}")
            success *= p_plus if branch is AttractorLabel.PLUS else p_minus
        chosen = part.s_plus if branch is AttractorLabel.PLUS else part.s_minus

        transcript.append(LoopRecord(
            loop=loop,
            theta_applied=prep.theta,
            u2_applied=prep.u2_count,
            r_applied=prep.r_applied,
            m_used=m,
            branch_probs=(p_plus, p_minus),
            branch_taken=branch,
            set_sizes=(len(current), len(chosen)),
            proportional_after_u2=prep.proportional_after_u2,
        ))
        if len(chosen) >= len(current):
            raise NonConvergence(f"loop {loop} did not shrink the set")
        current = current.restricted(chosen)

    return IdentificationResult(
        identified_index=current.entries[0][0],
        loops=len(transcript),
        transcript=tuple(transcript),
        final_set=current,
        hidden_final=hidden,
        success_probability=success if mode is DecisionMode.EXPECTED else None,
    )


def success_probability(cset: CandidateSet, hidden_index: int, m: int, **kwargs) -> float:
    return identify(cset, hidden_index, m, DecisionMode.EXPECTED, **kwargs).success_probability
