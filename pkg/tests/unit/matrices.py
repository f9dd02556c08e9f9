"""Seeded unitary matrices shared by the unit tests."""

import numpy as np
import scipy.linalg
from scipy.stats import unitary_group


def haar_unitary(n: int, seed: int) -> np.ndarray:
    """Seeded Haar-random unitary"""
    return unitary_group.rvs(n, random_state=seed)


def near_identity_unitary(n: int, seed: int, scale: float = 0.3) -> np.ndarray:
    """exp(i * scale * H) for a seeded random Hermitian H of unit norm"""
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    h = (a + a.conj().T) / 2
    h /= np.linalg.norm(h, 2)
    return scipy.linalg.expm(1j * scale * h)


def y_rotation(n: int, beta: float) -> np.ndarray:
    """Rotation by beta in the (1, 2) plane, identity elsewhere"""
    g = np.eye(n, dtype=complex)
    c, s = np.cos(beta / 2), np.sin(beta / 2)
    g[:2, :2] = [[c, -s], [s, c]]
    return g
