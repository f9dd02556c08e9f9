"""
Matrices of U(n) acting on V(lambda) in the Gelfand-Zetlin basis.

Generator coefficients follow the classical Gelfand-Tsetlin formulas with
non-negative square roots for every E_{k,k+1}; E_{k+1,k} is the transpose.
Double precision matrices are kept sparse; high-precision matrices use
mpmath and are restricted to small dimensions.
"""

import itertools
import logging
import math
import threading
from fractions import Fraction
from typing import Dict, List, Sequence, Tuple, Union

import mpmath
import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import expm_multiply

from src.config import get_settings
from src.constants import TWO_PI_I, UNITARITY_TOL
from src.models.models import GZPattern, GZSCError, HighestWeight, LieGenerator, RepMatrix
from src.services.gz_combinatorics import (
    WeightLike,
    as_weight,
    branching,
    enumerate_patterns,
    pattern_weight,
    rho_shift,
    weyl_dimension,
)

logger = logging.getLogger(__name__)


class GeneratorIndexError(GZSCError, ValueError):
    """Custom exception for generator indices outside 1..n"""
    pass


class DimensionGuardError(GZSCError):
    """Custom exception for representations too large for dense assembly"""
    pass


class LogarithmError(GZSCError):
    """Custom exception for group elements with an eigenvalue at -1"""
    pass


class CertificationError(GZSCError):
    """Custom exception for high-precision values that are not recognizably rational"""
    pass


_basis_cache: Dict[Tuple[int, ...], Tuple[List[GZPattern], Dict[GZPattern, int]]] = {}
_generator_cache: Dict[Tuple, object] = {}
_cache_lock = threading.Lock()


def _mp_dps() -> int:
    return max(get_settings().mp_dps, 50)


def gz_basis(lam: WeightLike) -> Tuple[List[GZPattern], Dict[GZPattern, int]]:
    """Ordered GZ basis of V(lambda) and its index lookup."""
    lam = as_weight(lam)
    with _cache_lock:
        cached = _basis_cache.get(lam.entries)
    if cached is None:
        basis = enumerate_patterns(lam)
        cached = (basis, {pattern: i for i, pattern in enumerate(basis)})
        with _cache_lock:
            _basis_cache[lam.entries] = cached
    return cached


def raising_coefficient_squared(pattern: GZPattern, k: int, i: int) -> Fraction:
    """
    Squared coefficient of e_{pattern + delta_{i,k}} in E_{k,k+1} e_pattern.

    Args:
        pattern: Source pattern
        k: Row of the raised entry, 1 <= k <= n-1
        i: 0-based position of the raised entry in row k

    Returns:
        Non-negative Fraction (zero when the target is not a pattern)
    """
    def l(row: Tuple[int, ...], j: int) -> int:
        return row[j] - (j + 1)

    upper, row, lower = pattern.row(k + 1), pattern.row(k), pattern.row(k - 1)
    li = l(row, i)
    num = Fraction(-1)
    for j in range(k + 1):
        num *= l(upper, j) - li
    for j in range(k - 1):
        num *= l(lower, j) - li - 1
    den = Fraction(1)
    for j in range(k):
        if j != i:
            den *= (l(row, j) - li) * (l(row, j) - li - 1)
    return max(num / den, Fraction(0))


def _check_indices(n: int, gen: LieGenerator) -> None:
    if gen.a > n or gen.b > n:
        raise GeneratorIndexError(f"Generator E_{gen.a},{gen.b} out of range for n={n}")


def _adjacent_raising(lam: HighestWeight, k: int, precision: str):
    basis, index = gz_basis(lam)
    rows, cols, vals = [], [], []
    for c, pattern in enumerate(basis):
        for i in range(k):
            target = pattern.shifted(k, i, 1)
            r = index.get(target)
            if r is None:
                continue
            sq = raising_coefficient_squared(pattern, k, i)
            if sq:
                rows.append(r)
                cols.append(c)
                vals.append(sq)
    dim = len(basis)
    if precision == "mp":
        m = mpmath.matrix(dim, dim)
        with mpmath.workdps(_mp_dps()):
            for r, c, sq in zip(rows, cols, vals):
                m[r, c] = mpmath.sqrt(mpmath.mpf(sq.numerator) / sq.denominator)
        return m
    data = [math.sqrt(sq) for sq in vals]
    return sp.csr_matrix((data, (rows, cols)), shape=(dim, dim), dtype=complex)


def _diagonal(lam: HighestWeight, k: int, precision: str):
    basis, _ = gz_basis(lam)
    weights = [pattern_weight(pattern)[k - 1] for pattern in basis]
    if precision == "mp":
        m = mpmath.matrix(len(basis), len(basis))
        for i, w in enumerate(weights):
            m[i, i] = w
        return m
    return sp.diags(np.array(weights, dtype=complex), format="csr")


def _transpose(m, precision: str):
    return m.T if precision == "mp" else m.transpose().tocsr()


def _generator(lam: HighestWeight, a: int, b: int, precision: str):
    key = (lam.entries, a, b, precision)
    with _cache_lock:
        cached = _generator_cache.get(key)
    if cached is not None:
        return cached
    if a == b:
        m = _diagonal(lam, a, precision)
    elif b == a + 1:
        m = _adjacent_raising(lam, a, precision)
    elif a == b + 1:
        m = _transpose(_generator(lam, b, a, precision), precision)
    elif a < b:
        # [E_{a,b-1}, E_{b-1,b}] = E_{a,b}
        x, y = _generator(lam, a, b - 1, precision), _generator(lam, b - 1, b, precision)
        m = x * y - y * x
    else:
        x, y = _generator(lam, a, a - 1, precision), _generator(lam, a - 1, b, precision)
        m = x * y - y * x
    with _cache_lock:
        _generator_cache[key] = m
    return m


def sparse_generator(lam: WeightLike, a: int, b: int) -> sp.csr_matrix:
    """Sparse double-precision matrix of E_ab (1-based)."""
    lam = as_weight(lam)
    _check_indices(lam.n, LieGenerator.E(a, b))
    return _generator(lam, a, b, "double")


def _guard(dim: int, limit: int, what: str) -> None:
    if dim > limit:
        raise DimensionGuardError(f"{what}: dim V(lambda) = {dim} exceeds guard {limit}")


def generator_matrix(lam: WeightLike, gen: LieGenerator, precision: str = "double") -> RepMatrix:
    """
    Matrix of a gl(n) generator in the GZ basis.

    Args:
        lam: Highest weight
        gen: Generator E_ab
        precision: "double", or "mp" for an additional mpmath matrix

    Returns:
        RepMatrix with dense entries; ``exact`` holds the mpmath matrix when
        requested

    Raises:
        GeneratorIndexError: if an index exceeds n
        DimensionGuardError: if mp precision is asked for a large representation
    """
    lam = as_weight(lam)
    _check_indices(lam.n, gen)
    basis, _ = gz_basis(lam)
    if precision == "mp":
        _guard(len(basis), get_settings().exact_dim_limit, "mp generator")
    dense = _generator(lam, gen.a, gen.b, "double").toarray()
    exact = None
    if precision == "mp":
        with mpmath.workdps(_mp_dps()):
            exact = _generator(lam, gen.a, gen.b, "mp")
    return RepMatrix(basis=basis, entries=dense, exact=exact)


def lie_algebra_image(lam: WeightLike, x: np.ndarray) -> sp.csr_matrix:
    """Image of X = sum X_ab E_ab under the derived representation."""
    lam = as_weight(lam)
    n = lam.n
    dim = len(gz_basis(lam)[0])
    out = sp.csr_matrix((dim, dim), dtype=complex)
    for a in range(n):
        for b in range(n):
            if x[a, b] != 0:
                out = out + x[a, b] * _generator(lam, a + 1, b + 1, "double")
    return out


def unitary_log(g: np.ndarray, margin: float = 1e-6) -> np.ndarray:
    """
    Anti-Hermitian logarithm of a unitary matrix, principal branch.

    Raises:
        LogarithmError: if an eigenvalue lies within ``margin`` of -1
    """
    t, z = scipy.linalg.schur(g, output="complex")
    phases = np.angle(np.diag(t))
    if np.any(np.abs(phases) > np.pi - margin):
        raise LogarithmError("Matrix logarithm ill-conditioned: eigenvalue close to -1, perturb g")
    return z @ np.diag(1j * phases) @ z.conj().T


def check_unitary(g: np.ndarray, tol: float = UNITARITY_TOL) -> None:
    g = np.asarray(g)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ValueError("g must be a square matrix")
    err = np.max(np.abs(g.conj().T @ g - np.eye(g.shape[0])))
    if err > tol:
        raise ValueError(f"g is not unitary: max |g^H g - I| = {err:.2e}")


def group_matrix(lam: WeightLike, g: np.ndarray) -> RepMatrix:
    """
    Matrix of g in U(n) acting on V(lambda).

    Computes exp of the represented logarithm of g by scaling and squaring,
    then projects onto the unitary group with a polar decomposition.

    Raises:
        ValueError: if g is not unitary
        LogarithmError: if g has an eigenvalue near -1
        DimensionGuardError: if the representation exceeds the guard
    """
    lam = as_weight(lam)
    g = np.asarray(g, dtype=complex)
    if g.shape != (lam.n, lam.n):
        raise ValueError(f"g must be {lam.n}x{lam.n}")
    check_unitary(g)
    basis, _ = gz_basis(lam)
    _guard(len(basis), get_settings().dimension_guard, "group_matrix")
    x = unitary_log(g)
    r = scipy.linalg.expm(lie_algebra_image(lam, x).toarray())
    u, _ = scipy.linalg.polar(r)
    return RepMatrix(basis=basis, entries=u)


def group_matrix_element(lam: WeightLike, g: np.ndarray, target: GZPattern, source: GZPattern) -> complex:
    """
    Single entry <e_target, g e_source> of the matrix of g on V(lambda).

    Applies the exponential of the sparse generator image of log g to
    e_source without forming the dense matrix, so it reaches dimensions far
    beyond the group_matrix guard.

    Raises:
        ValueError: if g is not unitary or a pattern is not in V(lambda)
        LogarithmError: if g has an eigenvalue near -1
        DimensionGuardError: if dim V(lambda) exceeds the sparse guard
    """
    lam = as_weight(lam)
    g = np.asarray(g, dtype=complex)
    if g.shape != (lam.n, lam.n):
        raise ValueError(f"g must be {lam.n}x{lam.n}")
    check_unitary(g)
    _guard(weyl_dimension(lam), get_settings().sparse_dimension_guard, "group_matrix_element")
    basis, index = gz_basis(lam)
    if source not in index or target not in index:
        raise ValueError(f"Pattern not in the GZ basis of {lam}")
    x = unitary_log(g)
    e = np.zeros(len(basis), dtype=complex)
    e[index[source]] = 1.0
    column = expm_multiply(lie_algebra_image(lam, x).tocsc(), e)
    logger.debug(f"Sparse matrix element in V({lam.entries}), dim {len(basis)}")
    return complex(column[index[target]])


def _symmetrized(factors: Sequence[object], identity) -> object:
    orderings = list(itertools.permutations(factors))
    total = None
    for order in orderings:
        prod = identity
        for f in order:
            prod = prod * f
        total = prod if total is None else total + prod
    return total / len(orderings)


def _permutation_sign(perm: Sequence[int]) -> int:
    sign, seen = 1, set()
    for start in range(len(perm)):
        if start in seen:
            continue
        length, j = 0, start
        while j not in seen:
            seen.add(j)
            j = perm[j]
            length += 1
        sign *= (-1) ** (length - 1)
    return sign


def _invariant(lam: HighestWeight, k: int, j: int, precision: str):
    dim = len(gz_basis(lam)[0])
    identity = mpmath.eye(dim) if precision == "mp" else sp.identity(dim, dtype=complex, format="csr")
    total = None
    for subset in itertools.combinations(range(1, k + 1), j):
        for perm in itertools.permutations(range(j)):
            factors = [_generator(lam, subset[i], subset[perm[i]], precision) for i in range(j)]
            term = _symmetrized(factors, identity) * _permutation_sign(perm)
            total = term if total is None else total + term
    return total


def gelfand_invariant_matrix(
    lam: WeightLike, k: int, j: int, lie_normalized: bool = False, precision: str = "double"
) -> RepMatrix:
    """
    Symmetric quantization of the j-th characteristic coefficient of the k-block.

    The j-th elementary symmetric function of the eigenvalues of the upper-left
    k x k block is the sum of its principal j-minors; each monomial in the
    generators is replaced by the average over all orderings.

    Args:
        lam: Highest weight
        k: Level, 1 <= k <= n
        j: Degree, 1 <= j <= k
        lie_normalized: multiply by (2 pi i)^j
        precision: "double" or "mp"

    Returns:
        RepMatrix, diagonal in the GZ basis up to rounding

    Raises:
        GeneratorIndexError: for invalid (k, j)
        DimensionGuardError: if dim V(lambda) exceeds the guard
    """
    lam = as_weight(lam)
    if not 1 <= j <= k <= lam.n:
        raise GeneratorIndexError(f"Need 1 <= j <= k <= n, got k={k}, j={j}")
    basis, _ = gz_basis(lam)
    settings = get_settings()
    _guard(len(basis), settings.dimension_guard, "gelfand_invariant_matrix")
    scale = TWO_PI_I ** j if lie_normalized else 1.0
    dense = _invariant(lam, k, j, "double").toarray() * scale
    exact = None
    if precision == "mp":
        _guard(len(basis), settings.exact_dim_limit, "mp invariant")
        with mpmath.workdps(_mp_dps()):
            exact = _invariant(lam, k, j, "mp")
    return RepMatrix(basis=basis, entries=dense, exact=exact)


def offdiagonal_mass(m: np.ndarray) -> float:
    """Frobenius norm of the off-diagonal part relative to the whole."""
    total = np.linalg.norm(m)
    if total == 0:
        return 0.0
    return float(np.linalg.norm(m - np.diag(np.diag(m))) / total)


def elementary_symmetric(values: Sequence[Union[Fraction, float]], j: int):
    """e_j of the given values."""
    total = 0
    for subset in itertools.combinations(values, j):
        prod = 1
        for x in subset:
            prod = prod * x
        total = total + prod
    return total


def casimir_eigenvalue(row: Sequence[int], j: int) -> Fraction:
    """
    Exact eigenvalue of the degree-j invariant on a U(k) block with highest weight row.

    Only degrees 1 and 2 have a closed form here: the row sum, and
    ``e_2(row + rho_k) + |rho_k|^2 / 2``.
    """
    k = len(row)
    if j == 1:
        return Fraction(sum(row))
    if j == 2:
        rho = rho_shift(k).rho
        shifted = [Fraction(x) + r for x, r in zip(row, rho)]
        return elementary_symmetric(shifted, 2) + Fraction(k * (k * k - 1), 24)
    raise GeneratorIndexError(f"No closed form for degree {j}")


def certify_rational(x, max_denominator: int = 10 ** 6) -> Fraction:
    """
    Identify a high-precision real as a rational number.

    Raises:
        CertificationError: if the value is not within the working precision
            of a rational with bounded denominator
    """
    x = mpmath.mpmathify(x)
    if abs(mpmath.im(x)) > mpmath.mpf(10) ** (-(mpmath.mp.dps - 10)):
        raise CertificationError(f"Value {mpmath.nstr(x, 20)} is not real")
    re = mpmath.re(x)
    candidate = Fraction(mpmath.nstr(re, mpmath.mp.dps, strip_zeros=False)).limit_denominator(max_denominator)
    if abs(re - mpmath.mpf(candidate.numerator) / candidate.denominator) > mpmath.mpf(10) ** (-(mpmath.mp.dps - 10)):
        raise CertificationError(f"Value {mpmath.nstr(re, 20)} is not a recognizable rational")
    return candidate


def harish_chandra_check(
    lam: WeightLike, k: int, j: int, exact: bool = None
) -> List[Tuple[GZPattern, Union[Fraction, float], Union[Fraction, complex]]]:
    """
    Compare invariant eigenvalues with their Harish-Chandra predictions.

    For j in {1, 2} the prediction is the exact eigenvalue and observed values
    are certified rationals when the representation is small enough. For
    larger j the prediction is the leading term e_j(row k).

    Returns:
        One (pattern, predicted, observed) triple per basis vector
    """
    lam = as_weight(lam)
    basis, _ = gz_basis(lam)
    settings = get_settings()
    if exact is None:
        exact = j <= 2 and len(basis) <= settings.exact_dim_limit
    m = gelfand_invariant_matrix(lam, k, j, precision="mp" if exact else "double")
    results = []
    with mpmath.workdps(_mp_dps()):
        for i, pattern in enumerate(basis):
            row = pattern.row(k)
            if j <= 2:
                predicted = casimir_eigenvalue(row, j)
            else:
                predicted = float(elementary_symmetric([float(x) for x in row], j))
            observed = certify_rational(m.exact[i, i]) if exact else complex(m.entries[i, i])
            results.append((pattern, predicted, observed))
    logger.info(f"Harish-Chandra check lambda={lam} k={k} j={j}: {len(results)} patterns")
    return results


def harish_chandra_scaling(
    direction: WeightLike, k: int, j: int, p_list: Sequence[int]
) -> List[Tuple[int, float]]:
    """
    Leading-order scaling of invariant eigenvalues along p * direction.

    Returns:
        (p, max over patterns of |observed / p^j - e_j(row k / p)|) per p
    """
    direction = as_weight(direction)
    out = []
    for p in p_list:
        lam = direction.scaled(p)
        basis, _ = gz_basis(lam)
        diag = _invariant(lam, k, j, "double").diagonal()
        worst = 0.0
        for pattern, obs in zip(basis, diag):
            lead = float(elementary_symmetric([x / p for x in pattern.row(k)], j))
            worst = max(worst, abs(obs / p ** j - lead))
        out.append((p, worst))
        logger.debug(f"Harish-Chandra scaling p={p}: residual {worst:.3e}")
    return out


def branching_spectrum(lam: WeightLike, tol: float = 1e-9) -> List[HighestWeight]:
    """
    Highest weights of the restriction of V(lambda) to U(n-1).

    Finds, in every U(n-1) weight space, the vectors killed by all raising
    operators of u(n-1); the number of such vectors is the multiplicity of
    that weight as a highest weight.

    Returns:
        Highest weights with multiplicity, sorted descending
    """
    lam = as_weight(lam)
    n = lam.n
    if n == 1:
        return []
    basis, _ = gz_basis(lam)
    raisers = [sparse_generator(lam, a, a + 1).toarray() for a in range(1, n - 1)]
    spaces: Dict[Tuple[int, ...], List[int]] = {}
    for i, pattern in enumerate(basis):
        spaces.setdefault(pattern_weight(pattern)[: n - 1], []).append(i)
    found = []
    for weight, idx in spaces.items():
        if any(a < b for a, b in zip(weight, weight[1:])):
            continue
        if raisers:
            stacked = np.vstack([r[:, idx] for r in raisers])
            multiplicity = scipy.linalg.null_space(stacked, rcond=tol).shape[1]
        else:
            multiplicity = len(idx)
        found.extend([HighestWeight(entries=weight)] * multiplicity)
    found.sort(key=lambda w: w.entries, reverse=True)
    expected = sorted(branching(lam), key=lambda w: w.entries, reverse=True)
    if [w.entries for w in found] != [w.entries for w in expected]:
        logger.warning(f"Branching of {lam} found {len(found)} highest weights, expected {len(expected)}")
    return found
