"""
V(p, 0, ..., 0) realized on homogeneous polynomials of degree p.

g acts by ``(g.f)(z) = f(g^T z)``, so ``z^nu`` has torus weight nu and

    g.z^nu = prod_j (sum_k g_kj z_k)^{nu_j}.

Monomials are orthogonal for the Fubini-Study L^2 product with
``||z^nu||^2 = nu! (n-1)! / (p+n-1)!``.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from typing import Dict, List, Sequence, Tuple

import mpmath
import numpy as np
import sympy

from src.config import get_settings
from src.models.models import ExactElement, GZSCError

logger = logging.getLogger(__name__)

MultiIndex = Tuple[int, ...]


class MultiIndexError(GZSCError, ValueError):
    """Custom exception for multi-indices of the wrong size or degree"""
    pass


def multi_indices(n: int, p: int) -> List[MultiIndex]:
    """All nu >= 0 of length n with |nu| = p, descending lexicographic."""
    if n == 1:
        return [(p,)]
    out = []
    for first in range(p, -1, -1):
        for rest in multi_indices(n - 1, p - first):
            out.append((first,) + rest)
    return out


def _validate(nu: Sequence[int], p: int = None) -> MultiIndex:
    nu = tuple(int(x) for x in nu)
    if any(x < 0 for x in nu):
        raise MultiIndexError(f"Multi-index has negative entries: {nu}")
    if p is not None and sum(nu) != p:
        raise MultiIndexError(f"Multi-index {nu} does not have degree {p}")
    return nu


def monomial_norm_squared(nu: Sequence[int]) -> Fraction:
    """Exact ||z^nu||^2 for the normalized Fubini-Study product."""
    nu = _validate(nu)
    n, p = len(nu), sum(nu)
    num = math.prod(math.factorial(x) for x in nu) * math.factorial(n - 1)
    return Fraction(num, math.factorial(p + n - 1))


def monomial_norm(nu: Sequence[int]) -> sympy.Expr:
    """||z^nu|| as an exact square root of a rational."""
    sq = monomial_norm_squared(nu)
    return sympy.sqrt(sympy.Rational(sq.numerator, sq.denominator))


def _is_exact(x) -> bool:
    if isinstance(x, (int, Fraction)):
        return True
    if isinstance(x, sympy.Basic):
        return x.is_number
    return False


def _to_ring(x, exact: bool):
    if exact:
        if isinstance(x, Fraction):
            return sympy.Rational(x.numerator, x.denominator)
        return sympy.sympify(x)
    return mpmath.mpc(complex(x)) if not isinstance(x, (mpmath.mpf, mpmath.mpc)) else x


def _power_terms(column: Sequence, m: int, bound: MultiIndex) -> Dict[MultiIndex, object]:
    """Coefficients of (sum_k c_k z_k)^m restricted to exponents <= bound."""
    terms: Dict[MultiIndex, object] = {(0,) * len(column): 1}
    for _ in range(m):
        nxt: Dict[MultiIndex, object] = {}
        for exp, coeff in terms.items():
            for k, c in enumerate(column):
                if c == 0 or exp[k] >= bound[k]:
                    continue
                e = exp[:k] + (exp[k] + 1,) + exp[k + 1:]
                nxt[e] = nxt.get(e, 0) + coeff * c
        terms = nxt
    return terms


def _convolve(a: Dict[MultiIndex, object], b: Dict[MultiIndex, object], bound: MultiIndex):
    out: Dict[MultiIndex, object] = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            e = tuple(x + y for x, y in zip(ea, eb))
            if any(x > y for x, y in zip(e, bound)):
                continue
            out[e] = out.get(e, 0) + ca * cb
    return out


def _expansion(g, nu: MultiIndex, bound: MultiIndex, exact: bool) -> Dict[MultiIndex, object]:
    n = len(nu)
    acc: Dict[MultiIndex, object] = {(0,) * n: 1}
    for j in range(n):
        if nu[j] == 0:
            continue
        column = [_to_ring(g[k][j], exact) for k in range(n)]
        acc = _convolve(acc, _power_terms(column, nu[j], bound), bound)
    return acc


def _working_dps(n: int, p: int) -> int:
    # the expansion sums terms of size up to sqrt(n)^p before cancelling
    return get_settings().mp_dps + int(math.ceil(p * math.log10(math.sqrt(n)))) + 10


def exact_matrix_element(p: int, g, nu: Sequence[int], mu: Sequence[int]) -> ExactElement:
    """
    Coefficient of e_mu in g.e_nu for normalized monomials.

    Args:
        p: Degree
        g: n x n unitary, as nested sequences or a numpy array; sympy/Fraction
            entries give an exact result
        nu: Source multi-index
        mu: Target multi-index

    Returns:
        ExactElement with a sympy value ("exact") or an mpmath value ("float128")
    """
    nu, mu = _validate(nu, p), _validate(mu, p)
    if len(nu) != len(mu):
        raise MultiIndexError("nu and mu have different lengths")
    n = len(nu)
    entries = [[g[i][j] for j in range(n)] for i in range(n)]
    exact = all(_is_exact(x) for row in entries for x in row)
    if exact:
        coeff = _expansion(entries, nu, mu, True).get(mu, 0)
        ratio = monomial_norm(mu) / monomial_norm(nu)
        return ExactElement(value=sympy.simplify(coeff * ratio), provenance="exact")
    with mpmath.workdps(_working_dps(n, p)):
        coeff = _expansion(entries, nu, mu, False).get(mu, 0)
        sq = monomial_norm_squared(mu) / monomial_norm_squared(nu)
        value = mpmath.mpc(coeff) * mpmath.sqrt(mpmath.mpf(sq.numerator) / sq.denominator)
    return ExactElement(value=value, provenance="float128")


def _column(args) -> Tuple[int, np.ndarray]:
    c, p, g, nu, index = args
    n = len(nu)
    out = np.zeros(len(index), dtype=complex)
    expansion = _expansion(g, nu, (p,) * n, False)
    for mu, coeff in expansion.items():
        sq = monomial_norm_squared(mu) / monomial_norm_squared(nu)
        out[index[mu]] = complex(mpmath.mpc(coeff) * mpmath.sqrt(mpmath.mpf(sq.numerator) / sq.denominator))
    return c, out


def element_matrix(p: int, g: np.ndarray, max_workers: int = None) -> Tuple[List[MultiIndex], np.ndarray]:
    """
    Full matrix of g on degree-p polynomials.

    Returns:
        (basis, R) with R[mu, nu] the coefficient of e_mu in g.e_nu
    """
    g = np.asarray(g, dtype=complex)
    n = g.shape[0]
    basis = multi_indices(n, p)
    index = {nu: i for i, nu in enumerate(basis)}
    out = np.zeros((len(basis), len(basis)), dtype=complex)
    rows = [[g[i, j] for j in range(n)] for i in range(n)]
    jobs = [(c, p, rows, nu, index) for c, nu in enumerate(basis)]
    workers = max_workers or get_settings().max_workers
    # mpmath precision is process-global, so it is fixed once around the pool
    with mpmath.workdps(_working_dps(n, p)), ThreadPoolExecutor(max_workers=workers) as pool:
        for c, col in pool.map(_column, jobs):
            out[:, c] = col
    logger.debug(f"Built degree-{p} element matrix of size {len(basis)}")
    return basis, out


def wigner_d(j, m, mp, beta) -> mpmath.mpf:
    """
    Wigner small-d element d^j_{m, mp}(beta) by the explicit sum formula.

    Args:
        j: Spin, integer or half-integer (Fraction, int or float)
        m: Row projection
        mp: Column projection
        beta: Rotation angle in [0, pi]

    Returns:
        High-precision real value
    """
    j, m, mp = Fraction(j), Fraction(m), Fraction(mp)
    if (2 * j).denominator != 1 or (j + m).denominator != 1 or (j + mp).denominator != 1:
        raise ValueError(f"Invalid spin labels j={j}, m={m}, m'={mp}")
    if abs(m) > j or abs(mp) > j:
        raise ValueError(f"|m| and |m'| must not exceed j={j}")
    jm, jmm, jn, jnm = (int(x) for x in (j + m, j - m, j + mp, j - mp))
    diff = int(m - mp)
    with mpmath.workdps(get_settings().mp_dps + 10):
        half = mpmath.mpf(beta) / 2
        c, s = mpmath.cos(half), mpmath.sin(half)
        pref = mpmath.sqrt(math.factorial(jm) * math.factorial(jmm) * math.factorial(jn) * math.factorial(jnm))
        total = mpmath.mpf(0)
        for k in range(max(0, -diff), min(jn, jmm) + 1):
            den = math.factorial(jn - k) * math.factorial(k) * math.factorial(jmm - k) * math.factorial(k + diff)
            term = pref / den * c ** (int(2 * j) - 2 * k - diff) * s ** (2 * k + diff)
            total += -term if (k + diff) % 2 else term
    return +total


def rotation_matrix(beta: float) -> np.ndarray:
    """SU(2) element [[cos(b/2), -sin(b/2)], [sin(b/2), cos(b/2)]]."""
    c, s = np.cos(beta / 2), np.sin(beta / 2)
    return np.array([[c, -s], [s, c]], dtype=complex)


def spin_labels(nu: Sequence[int]) -> Tuple[Fraction, Fraction]:
    """(j, m) of a two-variable monomial z1^a z2^b: j = (a+b)/2, m = (a-b)/2."""
    a, b = nu
    return Fraction(a + b, 2), Fraction(a - b, 2)
