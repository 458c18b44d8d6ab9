import cmath
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qutrit_qsi.core import CoeffPair, QutritState, ZeroProbability, make_state
from qutrit_qsi.protocol import (
    SENTINEL,
    AttractorLabel,
    Quantity,
    ScanMode,
    ZeroCoefficient,
    branch_probabilities,
    circuit_step,
    classify,
    cumulative_survival,
    grid_scan,
    iterate_map,
    map_step,
    p1_after,
    rotated_coeffs,
    survival_prob,
)

from .helpers import random_pairs


def frac_map(z1, z2):
    return z1 * z1 / z2, z2 * z2 / z1


def frac_survival(z1, z2):
    a, b = z1 * z1, z2 * z2
    return (a * b + a ** 3 + b ** 3) / (1 + a + b) ** 4


def four_qutrit_oracle(c):
    """
    Whole protocol on the 81-dim space of qutrits (A1, A2, B1, B2), where
    (A1, A2) and (B1, B2) are the two input pairs. Gates are written as
    index permutations, measurements as slicing; nothing is shared with
    circuit_step except the input state.
    """
    psi = np.array([1, c.z1, c.z2], dtype=complex)
    psi /= np.linalg.norm(psi)
    t = np.einsum("a,b,c,d->abcd", psi, psi, psi, psi)

    t = t[[2, 1, 0], :, :, :]                    # u1 on A1: |0> <-> |2>
    t = t[:, :, [1, 0, 2], :]                    # u2 on B1: |0> <-> |1>
    t = t.copy()
    t[0, 1], t[1, 1] = t[1, 1].copy(), t[0, 1].copy()          # U1 on (A1, A2)
    t[:, :, 0, 2], t[:, :, 2, 2] = t[:, :, 2, 2].copy(), t[:, :, 0, 2].copy()  # U2 on (B1, B2)
    t = t[0, :, 0, :]                            # post-select A1 = 0, B1 = 0
    p_first = np.sum(np.abs(t) ** 2)
    t = t.copy()
    t[0, 1], t[1, 0] = t[1, 0].copy(), t[0, 1].copy()          # U on (A2, B2)
    out = t[0, :]                                # post-select A2 = 0
    p_total = np.sum(np.abs(out) ** 2)
    return p_total, out / math.sqrt(p_total), p_first


# ---- map_step -------------------------------------------------------------

def test_map_step_fixed_point():
    assert map_step(CoeffPair(1, 1)) == CoeffPair(1, 1)


def test_map_step_two_one():
    f = frac_map(Fraction(2), Fraction(1))
    assert f == (4, Fraction(1, 2))
    assert map_step(CoeffPair(2, 1)) == CoeffPair(4, 0.5)


def test_map_step_complex_boundary():
    out = map_step(CoeffPair(1, 1j))
    assert abs(out.z1 - (-1j)) < 1e-15 and abs(out.z2 - (-1)) < 1e-15
    assert out.mags == (1.0, 1.0)


@pytest.mark.parametrize("c", [CoeffPair(0, 1), CoeffPair(1, 0), CoeffPair(0, 0)])
def test_map_step_zero_coefficient(c):
    with pytest.raises(ZeroCoefficient):
        map_step(c)


def test_map_exchange_symmetry():
    for c in random_pairs(300, seed=11):
        assert map_step(c.swapped()) == map_step(c).swapped()


def test_map_ratio_cubes():
    for c in random_pairs(500, seed=12):
        r = abs(c.z1) / abs(c.z2)
        f = map_step(c)
        assert abs(abs(f.z1) / abs(f.z2) / r ** 3 - 1) < 1e-10


@settings(max_examples=200)
@given(st.floats(0.05, 20), st.floats(0, 2 * math.pi), st.floats(0, 2 * math.pi))
def test_unit_circle_invariant(rho, a, b):
    f = map_step(CoeffPair(rho * cmath.exp(1j * a), rho * cmath.exp(1j * b)))
    assert abs(abs(f.z1) - abs(f.z2)) <= 1e-12 * max(1, abs(f.z1))


# ---- circuit_step -----------------------------------------------------------

def test_circuit_step_fixed_point():
    out = circuit_step(CoeffPair(1, 1))
    assert abs(out.survival - 1 / 27) < 1e-15
    assert abs(out.post_state.z1 - 1) < 1e-12 and abs(out.post_state.z2 - 1) < 1e-12


def test_circuit_step_two_one():
    out = circuit_step(CoeffPair(2, 1))
    assert out.state.overlap(make_state(CoeffPair(4, 0.5))) == pytest.approx(1, abs=1e-12)
    assert abs(out.survival - 69 / 1296) < 1e-12


def test_circuit_step_zero_z2_gives_basis_one():
    # the map is undefined here; the exact circuit yields |1> with P = 1/16
    out = circuit_step(CoeffPair(1, 0))
    assert out.post_state is None
    assert out.state.overlap(QutritState.basis(1)) == pytest.approx(1, abs=1e-12)
    assert abs(out.survival - 1 / 16) < 1e-15
    assert abs(out.survival - survival_prob(CoeffPair(1, 0))) < 1e-15


def test_circuit_step_origin_impossible():
    with pytest.raises(ZeroProbability):
        circuit_step(CoeffPair(0, 0))


def test_circuit_matches_map_and_survival():
    for c in random_pairs(500, seed=21):
        out = circuit_step(c)
        assert out.state.overlap(make_state(map_step(c))) >= 1 - 1e-10
        assert abs(out.survival - survival_prob(c)) <= 1e-12


def test_circuit_matches_four_qutrit_oracle():
    for c in random_pairs(100, seed=22):
        p_total, out, p_first = four_qutrit_oracle(c)
        step = circuit_step(c)
        assert abs(step.survival - p_total) < 1e-13
        assert abs(step.branch_probs[0] * step.branch_probs[1] - p_first) < 1e-13
        assert abs(abs(np.vdot(out, step.state.amp)) - 1) < 1e-12


# ---- survival ---------------------------------------------------------------

def test_survival_examples():
    assert survival_prob(CoeffPair(0, 0)) == 0
    assert survival_prob(CoeffPair(1, 1)) == pytest.approx(1 / 27, abs=1e-16)
    assert frac_survival(Fraction(2), Fraction(1)) == Fraction(69, 1296)
    assert survival_prob(CoeffPair(2, 1)) == pytest.approx(69 / 1296, abs=1e-16)


def test_survival_symmetries():
    for c in random_pairs(200, seed=31):
        p = survival_prob(c)
        assert survival_prob(c.swapped()) == pytest.approx(p, rel=1e-14)
        rotated = CoeffPair(c.z1 * cmath.exp(0.3j), c.z2 * cmath.exp(-1.1j))
        assert survival_prob(rotated) == pytest.approx(p, rel=1e-14)


def test_survival_grid_maximum():
    # on an axis P = x^3 / (1 + x)^4 with x = |z|^2, maximal at x = 3
    a = np.linspace(0, 4, 801)
    x, y = np.meshgrid(a ** 2, a ** 2)
    p = (x * y + x ** 3 + y ** 3) / (1 + x + y) ** 4
    i = np.unravel_index(np.argmax(p), p.shape)
    assert abs(a[i[1]] ** 2 - 3) < 0.02 or abs(a[i[0]] ** 2 - 3) < 0.02
    assert min(a[i[0]], a[i[1]]) == 0
    assert abs(p[i] - 27 / 256) < 1e-6
    assert survival_prob(CoeffPair(math.sqrt(3), 0)) == pytest.approx(27 / 256, rel=1e-14)
    assert survival_prob(CoeffPair(1, 1)) < 27 / 256


# ---- iterate_map ----------------------------------------------------------

def test_iterate_two_steps():
    traj = iterate_map(CoeffPair(2, 1), 2)
    assert [p.z1 for p in traj.points] == [2, 4, 32]
    assert [p.z2 for p in traj.points] == [1, 0.5, 1 / 16]
    assert frac_map(Fraction(4), Fraction(1, 2)) == (32, Fraction(1, 16))
    p1 = frac_survival(Fraction(2), Fraction(1))
    p2 = frac_survival(Fraction(4), Fraction(1, 2))
    assert traj.per_step_survival == pytest.approx([float(p1), float(p2)], rel=1e-14)
    assert traj.cumulative_survival == pytest.approx(float(p1 * p2), rel=1e-14)


def test_iterate_zero_steps():
    traj = iterate_map(CoeffPair(0.3, 2j), 0)
    assert traj.points == (CoeffPair(0.3, 2j),)
    assert traj.cumulative_survival == 1.0


def test_iterate_fixed_point():
    traj = iterate_map(CoeffPair(1, 1), 5)
    assert all(p == CoeffPair(1, 1) for p in traj.points)
    assert traj.cumulative_survival == pytest.approx((1 / 27) ** 5, rel=1e-12)


def test_iterate_reports_failing_step():
    with pytest.raises(ZeroCoefficient) as exc:
        iterate_map(CoeffPair(1, 0), 3)
    assert exc.value.step == 0


def test_iterate_cumulative_is_product():
    for c in random_pairs(100, seed=41, mag=(0.5, 2)):
        traj = iterate_map(c, 3)
        assert traj.cumulative_survival == pytest.approx(math.prod(traj.per_step_survival),
                                                         rel=1e-12)
        for a, b in zip(traj.points, traj.points[1:]):
            assert b == map_step(a)


def test_iterate_rejects_negative():
    with pytest.raises(ValueError):
        iterate_map(CoeffPair(1, 2), -1)


# ---- p1_after / classify ----------------------------------------------------

@pytest.mark.parametrize("m", [0, 1, 2, 5])
def test_p1_fixed_point(m):
    assert p1_after(CoeffPair(1, 1), m) == pytest.approx(1 / 3, abs=1e-15)


def test_p1_after_three_steps_exact():
    z = (Fraction(2), Fraction(1))
    for _ in range(3):
        z = frac_map(*z)
    exact = z[0] ** 2 / (1 + z[0] ** 2 + z[1] ** 2)
    assert p1_after(CoeffPair(2, 1), 3) == pytest.approx(float(exact), abs=1e-15)
    assert abs(p1_after(CoeffPair(2, 1), 3) - 1) < 1e-4
    assert p1_after(CoeffPair(1, 2), 3) < 1e-4


def test_p1_basis_limit_last_step_only():
    assert p1_after(CoeffPair(1.3, 0), 1) == 1.0
    assert p1_after(CoeffPair(0, 0.7), 1) == 0.0
    with pytest.raises(ZeroCoefficient):
        p1_after(CoeffPair(1.3, 0), 2)
    with pytest.raises(ZeroCoefficient):
        p1_after(CoeffPair(0, 0), 1)


def test_classify_examples():
    assert classify(CoeffPair(2, 1)) is AttractorLabel.PLUS
    assert classify(CoeffPair(1, 2)) is AttractorLabel.MINUS
    for phi in np.linspace(0, 2 * math.pi, 17):
        assert classify(CoeffPair(1, cmath.exp(1j * phi))) is AttractorLabel.BOUNDARY


# ---- branch probabilities ---------------------------------------------------

def test_branch_probabilities_match_iterated_state():
    for c in random_pairs(100, seed=51, mag=(0.5, 2)):
        for m in range(4):
            f = iterate_map(c, m).final
            p1, p2 = abs(f.z1) ** 2, abs(f.z2) ** 2
            got = branch_probabilities(c, m)
            assert got[0] == pytest.approx(p1 / (p1 + p2), abs=1e-12)
            assert sum(got) == pytest.approx(1, abs=1e-15)


def test_branch_probabilities_large_m_no_overflow():
    pp, pm = branch_probabilities(CoeffPair(1.001, 1), 40)
    assert pp == 1.0 and pm >= 0
    pp, pm = branch_probabilities(CoeffPair(1, 1.5), 12)
    assert pp == 0.0 and pm == 1.0


# ---- grid scans -------------------------------------------------------------

def test_grid_direct_diagonal():
    # z1 = z2 = a is a fixed line, so p1 = a^2 / (1 + 2 a^2) at every M
    for m in (1, 3):
        scan = grid_scan((0.5, 2.0, 0.5, 2.0), 16, m)
        a = scan.x
        assert np.allclose(np.diag(scan.values), a ** 2 / (1 + 2 * a ** 2), atol=1e-14)
        assert abs(scan.values[5, 5] - 1 / 3) < 1e-14


def test_grid_direct_exchange_symmetry():
    # swapping z1 <-> z2 exchanges p1 and p2; off the diagonal p0 -> 0 at M = 4
    scan = grid_scan((0.25, 2.0, 0.25, 2.0), 8, 4)
    off = ~np.eye(8, dtype=bool)
    assert np.allclose((scan.values + scan.values.T)[off], 1, atol=0.02)


def test_grid_direct_sentinel_on_axes():
    scan = grid_scan((0.0, 2.0, 0.0, 2.0), 5, 2)
    assert scan.values[0, 0] == SENTINEL
    assert np.all(scan.values[0, 1:] == SENTINEL)   # z2 = 0, two steps
    scan1 = grid_scan((0.0, 2.0, 0.0, 2.0), 5, 1)
    assert np.all(scan1.values[0, 1:] == 1.0)       # z2 = 0, one step -> |1>
    assert scan1.values[0, 0] == SENTINEL


def test_grid_rotated_phi_pi_half():
    scan = grid_scan((0.5, 1.5, math.pi / 2 - 0.5, math.pi / 2 + 0.5), 3, 1,
                     ScanMode.R_ROTATED)
    assert scan.x[1] == 1.0 and scan.y[1] == math.pi / 2
    assert scan.values[1, 1] == pytest.approx(1.0, abs=1e-12)


def test_grid_rotated_phi_zero_row():
    scan = grid_scan((0.2, 2.0, -1.0, 1.0), 11, 3, ScanMode.R_ROTATED)
    assert scan.y[5] == 0.0
    rho = scan.x
    assert np.allclose(scan.values[5], rho ** 2 / (1 + 2 * rho ** 2), atol=1e-12)
    unit = grid_scan((0.5, 1.5, -1.0, 1.0), 3, 3, ScanMode.R_ROTATED)
    assert abs(unit.values[1, 1] - 1 / 3) < 1e-12


def test_grid_rotated_matches_r_law():
    for rho, phi in [(0.7, 0.4), (1.5, -2.0), (1.1, 2.9)]:
        c = rotated_coeffs(rho, phi)
        assert abs(abs(c.z1) - rho * math.sqrt(1 + math.sin(phi))) < 1e-12
        assert abs(abs(c.z2) - rho * math.sqrt(1 - math.sin(phi))) < 1e-12


def test_grid_survival_quantity():
    scan = grid_scan((0.0, 2.0, 0.0, 2.0), 3, 1, quantity=Quantity.SURVIVAL)
    assert scan.values[1, 1] == pytest.approx(1 / 27, abs=1e-15)
    assert scan.values[0, 0] == 0.0
    scan2 = grid_scan((0.0, 2.0, 0.0, 2.0), 3, 2, quantity=Quantity.SURVIVAL)
    assert scan2.values[1, 1] == pytest.approx((1 / 27) ** 2, rel=1e-12)
    assert scan2.values[0, 2] == 0.0


def test_cumulative_survival_transformed_coeffs():
    p = cumulative_survival(CoeffPair(2, 1), 2)
    assert p == pytest.approx(float(frac_survival(Fraction(2), Fraction(1))
                                     * frac_survival(Fraction(4), Fraction(1, 2))), rel=1e-14)
    assert cumulative_survival(CoeffPair(1.5, 0), 1) == pytest.approx(survival_prob(CoeffPair(1.5, 0)))
    assert cumulative_survival(CoeffPair(1.5, 0), 2) == 0.0


@pytest.mark.parametrize("kwargs", [
    {"resolution": 1},
    {"region": (1.0, 0.0, 0.0, 1.0)},
    {"region": (0.0, float("inf"), 0.0, 1.0)},
])
def test_grid_rejects_bad_input(kwargs):
    with pytest.raises(ValueError):
        grid_scan(**kwargs)


def test_branch_probability_two_one_three_steps():
    # ratio 2 cubes three times to 2**27, so p- = 1 / (1 + 2**54)
    pp, pm = branch_probabilities(CoeffPair(2, 1), 3)
    assert pm == pytest.approx(2.0 ** -54, rel=1e-12)
    assert pp == 1 - pm
