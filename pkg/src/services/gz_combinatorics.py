"""
Gelfand-Zetlin combinatorics.

Patterns, polytopes, weights and rho-shifts. Everything here is exact:
integers for patterns, Fractions for scaled lattices and shifts.
"""

import itertools
import logging
import math
from fractions import Fraction
from typing import Iterator, List, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import cKDTree

from src.models.models import GZPattern, GZPolytope, GZSCError, HighestWeight, RhoShift

logger = logging.getLogger(__name__)

Number = Union[int, Fraction, float]
WeightLike = Union[HighestWeight, Sequence[int]]


class InvalidWeightError(GZSCError, ValueError):
    """Custom exception for malformed or non-regular highest weights"""
    pass


def as_weight(lam: WeightLike) -> HighestWeight:
    """Coerce a sequence into a validated HighestWeight."""
    if isinstance(lam, HighestWeight):
        return lam
    try:
        return HighestWeight(entries=tuple(lam))
    except ValueError as e:
        raise InvalidWeightError(str(e)) from e


def _interlacing_rows(row: Tuple[int, ...]) -> Iterator[Tuple[int, ...]]:
    """All rows one shorter than ``row`` interlacing it, in descending lex order."""
    ranges = [range(row[j], row[j + 1] - 1, -1) for j in range(len(row) - 1)]
    return itertools.product(*ranges)


def _descend(rows: List[Tuple[int, ...]]) -> Iterator[Tuple[Tuple[int, ...], ...]]:
    if len(rows[-1]) == 1:
        yield tuple(rows)
        return
    for below in _interlacing_rows(rows[-1]):
        yield from _descend(rows + [below])


def enumerate_patterns(lam: WeightLike) -> List[GZPattern]:
    """
    Enumerate the Gelfand-Zetlin patterns with top row lambda.

    Patterns are ordered descending-lexicographically by rows read top to
    bottom, so the highest weight vector comes first.

    Args:
        lam: Highest weight

    Returns:
        List of GZPattern, one per basis vector of V(lambda)

    Raises:
        InvalidWeightError: if lambda is not nonincreasing
    """
    lam = as_weight(lam)
    patterns = [GZPattern(rows) for rows in _descend([lam.entries])]
    logger.debug(f"Enumerated {len(patterns)} patterns for lambda={lam}")
    return patterns


def weyl_dimension(lam: WeightLike) -> int:
    """Weyl dimension formula, exact integer arithmetic."""
    lam = as_weight(lam)
    e = lam.entries
    num, den = 1, 1
    for i in range(lam.n):
        for j in range(i + 1, lam.n):
            num *= e[i] - e[j] + j - i
            den *= j - i
    return num // den


def pattern_weight(pattern: GZPattern) -> Tuple[int, ...]:
    """
    Full torus weight of a pattern.

    Entry k is the sum of row k minus the sum of row k-1.
    """
    sums = [sum(pattern.row(k)) for k in range(pattern.n + 1)]
    return tuple(sums[k] - sums[k - 1] for k in range(1, pattern.n + 1))


def rho_shift(n: int) -> RhoShift:
    """
    Half-sum of positive roots of u(n) and its integral part.

    ``rho_j = (n - 2j + 1)/2``; ``rho_bar`` rounds each entry away from zero,
    which keeps it antisymmetric; ``rho_tilde`` carries ``rho_k`` on row k
    (top row first).
    """
    if n < 1:
        raise InvalidWeightError(f"n must be positive, got {n}")

    def rho(k: int) -> Tuple[Fraction, ...]:
        return tuple(Fraction(k - 2 * j + 1, 2) for j in range(1, k + 1))

    rho_n = rho(n)
    rho_bar = tuple(int(math.copysign(math.ceil(abs(r)), r)) if r else 0 for r in rho_n)
    rho_tilde = tuple(rho(k) for k in range(n, 0, -1))
    return RhoShift(rho=rho_n, rho_bar=rho_bar, rho_tilde=rho_tilde)


def gz_polytope(lam: WeightLike) -> GZPolytope:
    """Inequality description of the Gelfand-Zetlin polytope of lambda."""
    lam = as_weight(lam)
    n = lam.n
    inequalities = []
    for k in range(n, 1, -1):
        for j in range(k - 1):
            inequalities.append(((k, j), (k - 1, j)))
            inequalities.append(((k - 1, j), (k, j + 1)))
    return GZPolytope(lam=lam, dimension=n * (n - 1) // 2, inequalities=tuple(inequalities))


def unflatten(coords: Sequence[Number], n: int) -> List[Tuple[Number, ...]]:
    """Split flat polytope coordinates into rows n-1, ..., 1."""
    coords = list(coords)
    if len(coords) != n * (n - 1) // 2:
        raise InvalidWeightError(f"Expected {n * (n - 1) // 2} coordinates, got {len(coords)}")
    rows, start = [], 0
    for k in range(n - 1, 0, -1):
        rows.append(tuple(coords[start:start + k]))
        start += k
    return rows


def interlacing_slack(top: Sequence[Number], coords: Sequence[Number]) -> Number:
    """
    Smallest slack of the interlacing inequalities.

    Negative when the array lies outside the polytope; exact when the inputs
    are integers or Fractions.
    """
    rows = [tuple(top)] + unflatten(coords, len(top))
    slack = None
    for upper, lower in zip(rows, rows[1:]):
        for j, x in enumerate(lower):
            s = min(upper[j] - x, x - upper[j + 1])
            slack = s if slack is None else min(slack, s)
    return slack if slack is not None else 0


def polytope_contains(polytope: GZPolytope, coords: Sequence[Number], slack: Number = 0) -> bool:
    """Membership of flat coordinates in the polytope, with the given slack."""
    return interlacing_slack(polytope.lam.entries, coords) >= -slack


def distance_to_boundary(lam: WeightLike, v: Sequence[Number]) -> float:
    """Minimal interlacing slack of an interior point (0 on the boundary)."""
    lam = as_weight(lam)
    return float(interlacing_slack(lam.entries, v))


def scaled_lattice(lam: WeightLike, p: int) -> List[Tuple[Tuple[Fraction, ...], ...]]:
    """
    Lattice points of the shifted polytope scaled by 1/p.

    Args:
        lam: Regular highest weight
        p: Positive scaling parameter

    Returns:
        Rational triangular arrays (rows n-1 down to 1), one per GZ basis
        vector of V(p*lambda + rho_bar)

    Raises:
        InvalidWeightError: if lambda is not regular or p is not positive
    """
    lam = as_weight(lam)
    if not lam.regular:
        raise InvalidWeightError(f"scaled_lattice needs a regular weight, got {lam}")
    if p <= 0:
        raise InvalidWeightError(f"p must be positive, got {p}")
    shifted = lam.scaled(p, rho_shift(lam.n).rho_bar)
    return [
        tuple(tuple(Fraction(x, p) for x in row) for row in pattern.rows[1:])
        for pattern in enumerate_patterns(shifted)
    ]


def branching(lam: WeightLike) -> List[HighestWeight]:
    """Highest weights of U(n-1) occurring in V(lambda), each once."""
    lam = as_weight(lam)
    return [HighestWeight(entries=row) for row in _interlacing_rows(lam.entries)]


def _sample_polytope(top: Sequence[float], count: int, rng: np.random.Generator) -> np.ndarray:
    samples = []
    for _ in range(count):
        row, coords = list(top), []
        for k in range(len(top) - 1, 0, -1):
            row = [rng.uniform(row[j + 1], row[j]) for j in range(k)]
            coords.extend(row)
        samples.append(coords)
    return np.array(samples)


def hausdorff_distance(lam: WeightLike, p: int, samples: int = 2000, seed: int = 0) -> float:
    """
    Sampled Hausdorff distance between Delta_lambda and (1/p) Gamma_p.

    Distance from the polytope side is estimated on random interlacing arrays;
    the lattice side uses the exact exterior slack of each scaled point.
    """
    lam = as_weight(lam)
    exact = [[x for row in pt for x in row] for pt in scaled_lattice(lam, p)]
    lattice = np.array([[float(x) for x in pt] for pt in exact])
    rng = np.random.default_rng(seed)
    points = _sample_polytope([float(x) for x in lam.entries], samples, rng)
    inner, _ = cKDTree(lattice).query(points)
    outer = max(max(0.0, -float(interlacing_slack(lam.entries, pt))) for pt in exact)
    return float(max(np.max(inner), outer))
