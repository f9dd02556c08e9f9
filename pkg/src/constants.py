"""
Normalization table shared by every service.

Hermitian matrices are identified with u(n)* through
``<alpha, xi> = Tr(alpha xi) / (2 pi i)``, so the integral lattice of the
maximal torus is ``2 pi i Z^n`` and weights are integer vectors.
"""

from fractions import Fraction
from typing import Sequence

import numpy as np

TWO_PI_I = 2j * np.pi

# Tolerances used across modules
UNITARITY_TOL = 1e-12
HERMITIAN_TOL = 1e-10

# Dense guards
DIMENSION_GUARD = 5000
EXACT_DIM_LIMIT = 200
# single entries by sparse expm_multiply
SPARSE_DIMENSION_GUARD = 250000

# Half-form shift of the toric levels: a monomial of degree d on C^n sits
# at level (nu + HALF_FORM_SHIFT) / (d + n * HALF_FORM_SHIFT).
HALF_FORM_SHIFT = Fraction(1, 2)

# Quadrature points per angle per unit of degree in bergman_states
QUADRATURE_POINTS_PER_DEGREE = 4


def pairing(alpha: np.ndarray, xi: np.ndarray) -> float:
    """Evaluate the Hermitian point ``alpha`` on the anti-Hermitian ``xi``."""
    return float(np.real(np.trace(alpha @ xi) / TWO_PI_I))


def complex_dimension(lam: Sequence[int]) -> int:
    """Complex dimension of the coadjoint orbit through diag(lam)."""
    n = len(lam)
    return sum(1 for i in range(n) for j in range(i + 1, n) if lam[i] != lam[j])


def prefactor_power(mode: str, lam: Sequence[int]) -> float:
    """
    Power of p multiplying the exact matrix element in the asymptotic formulas.

    Equals half the dimension of the fibres, i.e. half the complex dimension
    of the orbit: ``(n-1)/2`` on projective space, ``n(n-1)/4`` on a full
    flag manifold.

    Args:
        mode: "toric", "wigner" or "flag"
        lam: highest weight of the orbit (``(1, 0, ..., 0)`` in toric mode)

    Returns:
        The exponent as a float
    """
    if mode in ("toric", "wigner"):
        return (len(lam) - 1) / 2.0
    if mode == "flag":
        return complex_dimension(lam) / 2.0
    raise ValueError(f"Unknown prediction mode: {mode}")
