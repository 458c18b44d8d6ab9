import math

import numpy as np

from qutrit_qsi.core import CoeffPair


def random_pairs(n, seed, mag=(0.2, 3.0)):
    rng = np.random.default_rng(seed)
    rho = rng.uniform(*mag, size=(n, 2))
    phi = rng.uniform(0, 2 * math.pi, size=(n, 2))
    return [CoeffPair.polar(r[0], p[0], r[1], p[1]) for r, p in zip(rho, phi)]


def random_states(n, seed, dim=3):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=(n, dim)) + 1j * rng.normal(size=(n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)
