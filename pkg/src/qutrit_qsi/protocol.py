"""
The post-selected two-pair protocol and the coefficient map it induces.

One protocol step consumes four copies of |0> + z1|1> + z2|2> and, when all
three |0><0| post-selections succeed, leaves one qutrit whose coefficients
are (z1**2/z2, z2**2/z1). `circuit_step` runs the gates literally on 9-dim
pair states; `map_step` is the closed form. The two are cross-checked in the
tests.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (
    EPS_ZERO,
    CoeffPair,
    QutritError,
    QutritState,
    apply3,
    apply9,
    big_u,
    big_u1,
    big_u2,
    coeffs_of,
    make_state,
    project_first_zero,
    rotation_r,
    tensor,
    u1,
    u2,
)

EPS_TIE = 1e-9
SENTINEL = -1.0


class ZeroCoefficient(QutritError):
    """The map is undefined because z1 or z2 vanishes.

    `step` is the 0-based index of the map application that failed.
    """

    def __init__(self, message: str, step: int = 0):
        super().__init__(message)
        self.step = step


class AttractorLabel(enum.Enum):
    PLUS = "plus"          # |z1| > |z2|, flows to |1>
    MINUS = "minus"        # |z1| < |z2|, flows to |2>
    BOUNDARY = "boundary"  # |z1| == |z2|, invariant circle


@dataclass(frozen=True)
class StepOutcome:
    """Result of one simulated protocol step.

    `state` is the surviving qutrit. `post_state` is its (z1, z2) form, or
    None when the survivor is |1> or |2> (one input coefficient was zero).
    """

    post_state: Optional[CoeffPair]
    survival: float
    state: QutritState
    branch_probs: tuple[float, float, float]


@dataclass(frozen=True)
class MapTrajectory:
    points: tuple[CoeffPair, ...]
    per_step_survival: tuple[float, ...]
    cumulative_survival: float

    @property
    def final(self) -> CoeffPair:
        return self.points[-1]


def map_step(c: CoeffPair) -> CoeffPair:
    z1, z2 = c.z1, c.z2
    if abs(z1) <= EPS_ZERO or abs(z2) <= EPS_ZERO:
        raise ZeroCoefficient(f"map undefined at ({z1}, {z2}): zero coefficient")
    if z1 == z2:
        # fixed line; z * z / z is not always z in floating point
        return c
    f1, f2 = z1 * z1 / z2, z2 * z2 / z1
    if not (math.isfinite(abs(f1)) and math.isfinite(abs(f2))):
        raise OverflowError(f"map image of ({z1}, {z2}) exceeds double range")
    return CoeffPair(f1, f2)


def circuit_step(c: CoeffPair) -> StepOutcome:
    psi = make_state(c)

    # pair j: u_j on the first member, U_j on the pair, keep first == |0>
    p_a, survivor_a = project_first_zero(apply9(big_u1(), tensor(apply3(u1(), psi), psi)))
    p_b, survivor_b = project_first_zero(apply9(big_u2(), tensor(apply3(u2(), psi), psi)))
    p_c, out = project_first_zero(apply9(big_u(), tensor(survivor_a, survivor_b)))

    post = coeffs_of(out) if abs(out.amp[0]) > EPS_ZERO else None
    return StepOutcome(post, p_a * p_b * p_c, out, (p_a, p_b, p_c))


def survival_prob(c: CoeffPair) -> float:
    a, b = abs(c.z1) ** 2, abs(c.z2) ** 2
    return (a * b + a ** 3 + b ** 3) / (1 + a + b) ** 4


def iterate_map(c: CoeffPair, m: int) -> MapTrajectory:
    if m < 0:
        raise ValueError(f"iteration count must be non-negative, got {m}")
    points = [c]
    probs = []
    for n in range(m):
        probs.append(survival_prob(points[-1]))
        try:
            points.append(map_step(points[-1]))
        except ZeroCoefficient as exc:
            raise ZeroCoefficient(f"step {n}: {exc}", step=n) from None
    return MapTrajectory(tuple(points), tuple(probs), float(math.prod(probs)))


def classify(c: CoeffPair, eps_tie: float = EPS_TIE) -> AttractorLabel:
    diff = abs(c.z1) - abs(c.z2)
    if diff > eps_tie:
        return AttractorLabel.PLUS
    if diff < -eps_tie:
        return AttractorLabel.MINUS
    return AttractorLabel.BOUNDARY


def _p1_of(c: CoeffPair) -> float:
    a, b = abs(c.z1) ** 2, abs(c.z2) ** 2
    return a / (1 + a + b)


def p1_after(c: CoeffPair, m: int) -> float:
    """
    Probability of finding |1> after `m` protocol steps.

    A step whose input has exactly one vanishing coefficient outputs the
    basis state |1> (z2 == 0) or |2> (z1 == 0) with nonzero survival; that
    is accepted as the last step only, since no further step can survive a
    basis-state input. Anything else undefined raises ZeroCoefficient.
    """
    if m == 0:
        return _p1_of(c)
    try:
        traj = iterate_map(c, m)
    except ZeroCoefficient as exc:
        if exc.step == m - 1:
            prev = c if m == 1 else iterate_map(c, m - 1).final
            small1, small2 = abs(prev.z1) <= EPS_ZERO, abs(prev.z2) <= EPS_ZERO
            if small1 != small2:
                return 1.0 if small2 else 0.0
        raise
    return _p1_of(traj.final)


def cumulative_survival(c: CoeffPair, m: int) -> float:
    """Probability that all `m` steps succeed, defined for every input.

    Mirrors `p1_after`: a basis-state survivor has zero survival at the
    next step, and (0, 0) never survives.
    """
    total = 1.0
    point = c
    for n in range(m):
        total *= survival_prob(point)
        if total == 0.0:
            return 0.0
        try:
            point = map_step(point)
        except ZeroCoefficient:
            return total if n == m - 1 else 0.0
        except OverflowError:
            # next-step survival ~ |z|**-2, far below double resolution
            return 0.0 if n < m - 1 else total
    return total


def branch_probabilities(c: CoeffPair, m: int) -> tuple[float, float]:
    """
    (p_plus, p_minus): outcome |1> vs |2> after `m` steps, conditioned on
    the measurement not returning |0>.

    Computed from log-magnitudes so large `m` does not overflow; past the
    range of doubles the magnitude ratio is advanced with r -> r**3.
    """
    a1, a2 = abs(c.z1), abs(c.z2)
    if a1 <= EPS_ZERO and a2 <= EPS_ZERO:
        return 0.5, 0.5
    if m > 0:
        try:
            traj = iterate_map(c, m)
            f1, f2 = abs(traj.final.z1), abs(traj.final.z2)
            if 0 < f1 < math.inf and 0 < f2 < math.inf:
                return _sigmoid_pair(2 * (math.log(f1) - math.log(f2)))
        except (ZeroCoefficient, OverflowError):
            pass
        if a1 <= EPS_ZERO or a2 <= EPS_ZERO:
            return (0.0, 1.0) if a1 <= EPS_ZERO else (1.0, 0.0)
        log_ratio = (math.log(a1) - math.log(a2)) * 3.0 ** m
        return _sigmoid_pair(2 * log_ratio)
    if a1 <= EPS_ZERO or a2 <= EPS_ZERO:
        return (0.0, 1.0) if a1 <= EPS_ZERO else (1.0, 0.0)
    return _sigmoid_pair(2 * (math.log(a1) - math.log(a2)))


def _sigmoid_pair(x: float) -> tuple[float, float]:
    # p = 1 / (1 + e^-x), evaluated on the stable side
    if x >= 0:
        e = math.exp(-x)
        return 1 / (1 + e), e / (1 + e)
    e = math.exp(x)
    return e / (1 + e), 1 / (1 + e)


# ---- landscapes ---------------------------------------------------------

class ScanMode(enum.Enum):
    DIRECT = "direct"
    R_ROTATED = "rotated"


class Quantity(enum.Enum):
    P1 = "p1"
    SURVIVAL = "survival"


DEFAULT_REGION = {
    ScanMode.DIRECT: (0.0, 2.0, 0.0, 2.0),
    ScanMode.R_ROTATED: (0.0, 2.0, -math.pi, math.pi),
}


def rotated_coeffs(rho: float, phi: float) -> CoeffPair:
    """Coefficients of R(|0> + rho|1> + rho e^{i phi}|2>)."""
    r = rotation_r()
    v = r @ np.array([1.0, rho, rho * complex(math.cos(phi), math.sin(phi))])
    return CoeffPair(complex(v[1] / v[0]), complex(v[2] / v[0]))


@dataclass(frozen=True)
class GridScan:
    """Values on a grid; rows follow `y`, columns follow `x`."""

    x: np.ndarray
    y: np.ndarray
    values: np.ndarray
    mode: ScanMode
    quantity: Quantity
    m: int

    @property
    def axis_names(self) -> tuple[str, str]:
        return ("z1", "z2") if self.mode is ScanMode.DIRECT else ("rho", "phi")


def grid_scan(
    region: Optional[Sequence[float]] = None,
    resolution: int = 101,
    m: int = 1,
    mode: ScanMode = ScanMode.DIRECT,
    quantity: Quantity = Quantity.P1,
) -> GridScan:
    """
    Evaluate `p1_after` (or cumulative survival) on a rectangular grid.

    `region` is (x0, x1, y0, y1). DIRECT uses real non-negative z1 (x) and
    z2 (y); R_ROTATED uses rho (x) and phi (y) for |0> + rho|1> +
    rho e^{i phi}|2> passed through R first. Undefined cells hold SENTINEL.
    """
    if resolution < 2:
        raise ValueError(f"resolution must be >= 2, got {resolution}")
    if m < 0:
        raise ValueError(f"iteration count must be non-negative, got {m}")
    x0, x1, y0, y1 = DEFAULT_REGION[mode] if region is None else region
    if not all(math.isfinite(v) for v in (x0, x1, y0, y1)) or x1 <= x0 or y1 <= y0:
        raise ValueError(f"invalid region {(x0, x1, y0, y1)}")
    xs = np.linspace(x0, x1, resolution)
    ys = np.linspace(y0, y1, resolution)
    out = np.empty((resolution, resolution))
    for i, y in enumerate(ys):
        for j, x in enumerate(xs):
            c = CoeffPair(x, y) if mode is ScanMode.DIRECT else rotated_coeffs(x, y)
            if quantity is Quantity.SURVIVAL:
                out[i, j] = cumulative_survival(c, m)
                continue
            try:
                out[i, j] = p1_after(c, m)
            except (ZeroCoefficient, OverflowError):
                out[i, j] = SENTINEL
    out.setflags(write=False)
    return GridScan(xs, ys, out, mode, quantity, m)
