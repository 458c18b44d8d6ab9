"""
Dense state-vector algebra for one and two qutrits.

States are stored as immutable complex numpy vectors (length 3 or 9, with the
pair index k = 3*k1 + k2). Operators are plain 3x3 / 9x9 complex arrays.
Everything here is a pure function; nothing holds mutable state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EPS_ZERO = 1e-12

_SQRT2_INV = 1 / math.sqrt(2)


class QutritError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateState(QutritError):
    """The |0> amplitude vanishes, so the state has no (z1, z2) form."""


class ZeroProbability(QutritError):
    """A post-selection branch has (numerically) zero probability."""


@dataclass(frozen=True)
class CoeffPair:
    """The pair (z1, z2) in |0> + z1|1> + z2|2> (up to normalization)."""

    z1: complex
    z2: complex

    def __post_init__(self):
        z1, z2 = complex(self.z1), complex(self.z2)
        if not (math.isfinite(z1.real) and math.isfinite(z1.imag)
                and math.isfinite(z2.real) and math.isfinite(z2.imag)):
            raise ValueError(f"non-finite coefficients ({z1}, {z2})")
        object.__setattr__(self, "z1", z1)
        object.__setattr__(self, "z2", z2)

    @classmethod
    def polar(cls, rho1: float, phi1: float, rho2: float, phi2: float) -> "CoeffPair":
        return cls(rho1 * complex(math.cos(phi1), math.sin(phi1)),
                   rho2 * complex(math.cos(phi2), math.sin(phi2)))

    @property
    def mags(self) -> tuple[float, float]:
        return abs(self.z1), abs(self.z2)

    def swapped(self) -> "CoeffPair":
        return CoeffPair(self.z2, self.z1)

    def __iter__(self):
        yield self.z1
        yield self.z2


def _frozen(vec) -> np.ndarray:
    arr = np.array(vec, dtype=complex)
    arr.setflags(write=False)
    return arr


def _check_norm(amp: np.ndarray) -> None:
    if not np.all(np.isfinite(amp)):
        raise ValueError("non-finite amplitude")
    norm = float(np.vdot(amp, amp).real)
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"state not normalized (norm^2 = {norm!r})")


@dataclass(frozen=True, eq=False)
class QutritState:
    amp: np.ndarray

    def __post_init__(self):
        amp = _frozen(self.amp)
        if amp.shape != (3,):
            raise ValueError(f"qutrit state needs 3 amplitudes, got shape {amp.shape}")
        _check_norm(amp)
        object.__setattr__(self, "amp", amp)

    @classmethod
    def from_vector(cls, vec) -> "QutritState":
        """Normalize `vec` and fix the global phase so amp[0] is real >= 0."""
        return cls(_normalized(np.asarray(vec, dtype=complex)))

    @classmethod
    def basis(cls, k: int) -> "QutritState":
        v = np.zeros(3, dtype=complex)
        v[k] = 1
        return cls(v)

    def overlap(self, other: "QutritState") -> float:
        """|<self|other>|, insensitive to global phase."""
        return float(abs(np.vdot(self.amp, other.amp)))

    def __repr__(self):
        return f"QutritState({np.array2string(self.amp, precision=6)})"


@dataclass(frozen=True, eq=False)
class TwoQutritState:
    amp: np.ndarray

    def __post_init__(self):
        amp = _frozen(self.amp)
        if amp.shape != (9,):
            raise ValueError(f"two-qutrit state needs 9 amplitudes, got shape {amp.shape}")
        _check_norm(amp)
        object.__setattr__(self, "amp", amp)

    @classmethod
    def basis(cls, k1: int, k2: int) -> "TwoQutritState":
        v = np.zeros(9, dtype=complex)
        v[3 * k1 + k2] = 1
        return cls(v)

    @classmethod
    def from_vector(cls, vec) -> "TwoQutritState":
        v = np.asarray(vec, dtype=complex)
        return cls(v / np.linalg.norm(v))


def _normalized(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if norm <= EPS_ZERO:
        raise ZeroProbability("cannot normalize a zero vector")
    v = v / norm
    if abs(v[0]) > EPS_ZERO:
        v = v * (abs(v[0]) / v[0])
        v[0] = abs(v[0])
    return v


def make_state(c: CoeffPair) -> QutritState:
    return QutritState(_normalized(np.array([1.0, c.z1, c.z2], dtype=complex)))


def coeffs_of(s: QutritState) -> CoeffPair:
    a0 = s.amp[0]
    if abs(a0) <= EPS_ZERO:
        raise DegenerateState(f"|0> amplitude {abs(a0):.3g} is zero; no (z1, z2) form")
    return CoeffPair(complex(s.amp[1] / a0), complex(s.amp[2] / a0))


# ---- operators ---------------------------------------------------------

def _ketbra(dim: int, pairs) -> np.ndarray:
    m = np.zeros((dim, dim), dtype=complex)
    for row, col in pairs:
        m[row, col] = 1
    return m


def _pair_swap(a: tuple[int, int], b: tuple[int, int]) -> np.ndarray:
    """Identity on the 9-dim space except |a> <-> |b>."""
    perm = list(range(9))
    ia, ib = 3 * a[0] + a[1], 3 * b[0] + b[1]
    perm[ia], perm[ib] = ib, ia
    return _ketbra(9, [(i, perm[i]) for i in range(9)])


def u1() -> np.ndarray:
    """Swap |0> <-> |2>."""
    return _ketbra(3, [(0, 2), (2, 0), (1, 1)])


def u2() -> np.ndarray:
    """Swap |0> <-> |1>."""
    return _ketbra(3, [(0, 1), (1, 0), (2, 2)])


def big_u1() -> np.ndarray:
    """Swap |01> <-> |11>."""
    return _pair_swap((0, 1), (1, 1))


def big_u2() -> np.ndarray:
    """Swap |02> <-> |22>."""
    return _pair_swap((0, 2), (2, 2))


def big_u() -> np.ndarray:
    """Swap |01> <-> |10>."""
    return _pair_swap((0, 1), (1, 0))


def rotation_r() -> np.ndarray:
    """Fixed rotation that unbalances |z1| and |z2| for states with equal magnitudes."""
    s = _SQRT2_INV
    return np.array([
        [1, 0, 0],
        [0, 1j * s, s],
        [0, -s, -1j * s],
    ], dtype=complex)


def rotation_w(theta: float) -> np.ndarray:
    """Real rotation by `theta` in the |1>,|2> plane."""
    if not math.isfinite(theta):
        raise ValueError(f"theta must be finite, got {theta!r}")
    c, s = math.cos(theta), math.sin(theta)
    return np.array([
        [1, 0, 0],
        [0, c, s],
        [0, -s, c],
    ], dtype=complex)


def is_unitary(m: np.ndarray, atol: float = 1e-12) -> bool:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return bool(np.allclose(m.conj().T @ m, np.eye(m.shape[0]), rtol=0, atol=atol))


# ---- state operations --------------------------------------------------

def apply3(u: np.ndarray, s: QutritState) -> QutritState:
    return QutritState(u @ s.amp)


def apply9(u: np.ndarray, s: TwoQutritState) -> TwoQutritState:
    return TwoQutritState(u @ s.amp)


def tensor(a: QutritState, b: QutritState) -> TwoQutritState:
    return TwoQutritState(np.kron(a.amp, b.amp))


def project_first_zero(s: TwoQutritState) -> tuple[float, QutritState]:
    """
    Measure the first qutrit with P = |0><0| and keep the "yes" branch.

    Returns the branch probability and the renormalized state of the second
    qutrit. Raises ZeroProbability if the branch cannot occur.
    """
    block = s.amp[0:3]
    prob = float(np.vdot(block, block).real)
    if prob <= EPS_ZERO:
        raise ZeroProbability(f"first-qutrit outcome |0> has probability {prob:.3g}")
    return prob, QutritState(_normalized(block))


def measurement_probs(s: QutritState) -> tuple[float, float, float]:
    p = np.abs(s.amp) ** 2
    return float(p[0]), float(p[1]), float(p[2])
