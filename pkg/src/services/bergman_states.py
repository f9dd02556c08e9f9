"""
Bergman kernel of O(p) on CP^{n-1} and isotropic states of toric fibres.

The isotropic state of a Bohr-Sommerfeld fibre is the Bergman projection of
its flat section. Coefficients in the normalized monomial basis come from
trapezoid quadrature over the fibre angles, done with numpy's FFT.
"""

import logging
import math
from fractions import Fraction
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import linregress

from src.constants import QUADRATURE_POINTS_PER_DEGREE, TWO_PI_I
from src.models.models import BSFlatSection, GZSCError, IsotropicStateCoeffs
from src.services.coadjoint_geometry import bohr_sommerfeld_level, fiber_volume
from src.services.monomial_rep import monomial_norm_squared, multi_indices

logger = logging.getLogger(__name__)


class QuadratureResolutionError(GZSCError, ValueError):
    """Custom exception for quadrature grids too coarse for the degree"""
    pass


def _full(v: Sequence) -> Tuple[Fraction, ...]:
    v = tuple(x if isinstance(x, Fraction) else Fraction(x) for x in v)
    return (1 - sum(v),) + v


def bergman_eval(p: int, z: np.ndarray, w: np.ndarray) -> complex:
    """
    Bergman kernel ``C(p+n-1, n-1) <z, w>^p`` of the normalized L^2 product.

    z and w are unit representatives; the value is holomorphic in z.
    """
    z, w = np.asarray(z, dtype=complex), np.asarray(w, dtype=complex)
    n = len(z)
    return complex(math.comb(p + n - 1, n - 1) * np.vdot(w, z) ** p)


def flat_section(v: Sequence, p: int) -> BSFlatSection:
    """
    Flat unit section of L^p over the fibre at level v.

    ``holonomy`` lists the fractional parts of p*v_j; the section is global
    only when all of them vanish.
    """
    v = tuple(Fraction(x) for x in v)
    holonomy = tuple(float((p * x) % 1) for x in v)
    return BSFlatSection(v=v, p=p, bohr_sommerfeld=bohr_sommerfeld_level(v, p), holonomy=holonomy)


def holonomy_drift(section: BSFlatSection) -> float:
    """Largest change of the flat section around a generating loop of the torus."""
    theta = np.zeros(len(section.v))
    base = section.value(theta)
    drift = 0.0
    for j in range(len(section.v)):
        loop = theta.copy()
        loop[j] = 1.0
        drift = max(drift, abs(section.value(loop) - base))
    return drift


def _support(v_full: Tuple[Fraction, ...]) -> Tuple[int, ...]:
    return tuple(j for j, x in enumerate(v_full) if x > 0)


def isotropic_state(p: int, v: Sequence, k_twist: int = 0, resolution: Optional[int] = None) -> IsotropicStateCoeffs:
    """
    Bergman projection of the flat section over the fibre |z_j|^2 = v_j.

    Args:
        p: Tensor power
        v: Levels (v_2, ..., v_n) as Fractions
        k_twist: Power of the canonical-bundle twist; the state lives in degree p - k_twist
        resolution: Angle samples per direction (default 4p, minimum 4p)

    Returns:
        IsotropicStateCoeffs with coefficients keyed by multi-index. A fibre
        that is not Bohr-Sommerfeld carries no flat section and yields the zero state.

    Raises:
        QuadratureResolutionError: if resolution is below 4p
    """
    v_full = _full(v)
    if any(x < 0 for x in v_full):
        raise ValueError(f"Levels {v} are outside the simplex")
    n = len(v_full)
    degree = p - k_twist
    minimum = QUADRATURE_POINTS_PER_DEGREE * p
    resolution = resolution or minimum
    if resolution < minimum:
        raise QuadratureResolutionError(f"Resolution {resolution} below {minimum} for p={p}")
    section = flat_section(v_full[1:], p)
    if not section.bohr_sommerfeld or degree < 0:
        logger.info(f"Fibre {tuple(map(str, v))} is not Bohr-Sommerfeld at p={p}; state is zero")
        return IsotropicStateCoeffs(p=p, v=tuple(v_full[1:]), k_twist=k_twist, coefficients={},
                                    bohr_sommerfeld=False, resolution=resolution)

    support = _support(v_full)
    gauge, free = support[0], support[1:]
    vol = fiber_volume([float(x) for x in v_full])
    # flat section sampled on the free angles of the torus
    axes = [np.arange(resolution) / resolution] * len(free)
    grid = np.meshgrid(*axes, indexing="ij") if free else []
    phase = np.zeros((resolution,) * len(free))
    for j, theta in zip(free, grid):
        phase = phase + float(p * v_full[j]) * theta
    samples = np.exp(TWO_PI_I * phase) if free else np.array(1.0 + 0j)
    # spectrum[m] = mean over the grid of samples * exp(-2 pi i m.theta)
    spectrum = np.fft.fftn(samples) / samples.size if free else samples

    coefficients: Dict[Tuple[int, ...], complex] = {}
    root = [math.sqrt(float(x)) for x in v_full]
    for mu in multi_indices(n, degree):
        if any(mu[j] for j in range(n) if j not in support):
            continue
        index = tuple(mu[j] % resolution for j in free)
        character = complex(spectrum[index]) if free else complex(spectrum)
        if character == 0:
            continue
        modulus = math.prod(root[j] ** mu[j] for j in support)
        norm = math.sqrt(float(monomial_norm_squared(mu)))
        coefficients[mu] = vol * character * modulus / norm
    values = sorted((abs(c) for c in coefficients.values()), reverse=True)
    leakage = values[1] / values[0] if len(values) > 1 and values[0] > 0 else 0.0
    norm_sq = float(sum(abs(c) ** 2 for c in coefficients.values()))
    logger.debug(f"Isotropic state p={p} v={tuple(map(str, v))}: |s|^2={norm_sq:.6e}, leakage={leakage:.1e}")
    return IsotropicStateCoeffs(p=p, v=tuple(v_full[1:]), k_twist=k_twist, coefficients=coefficients,
                                bohr_sommerfeld=True, resolution=resolution, leakage=leakage,
                                norm_squared=norm_sq)


def fiber_pairing(state: IsotropicStateCoeffs, section: Callable[[np.ndarray], complex]) -> complex:
    """
    Integral over the fibre of h(s, flat section), by direct trapezoid sums.

    ``section`` evaluates a holomorphic section on unit representatives.
    """
    v_full = _full(state.v)
    support = _support(v_full)
    free = support[1:]
    vol = fiber_volume([float(x) for x in v_full])
    flat = flat_section(v_full[1:], state.p)
    m = state.resolution
    total = 0j
    for idx in np.ndindex(*((m,) * len(free))):
        theta = np.zeros(len(v_full))
        for j, i in zip(free, idx):
            theta[j] = i / m
        y = np.sqrt([float(x) for x in v_full]) * np.exp(TWO_PI_I * theta)
        total += section(y) * np.conj(flat.value(theta[1:]))
    return complex(vol * total / m ** len(free))


def state_inner_product(state: IsotropicStateCoeffs, coefficients: Dict[Tuple[int, ...], complex]) -> complex:
    """<s, s_Lambda> for s given by monomial coefficients."""
    return complex(sum(a * np.conj(state.coefficients.get(mu, 0j)) for mu, a in coefficients.items()))


def norm_model(p: int, v: Sequence) -> float:
    """
    Leading term ``2^{d/2} p^{(n-1) - d/2} Vol(Lambda) / (n-1)!`` of |s_Lambda|^2.

    d is the dimension of the fibre; faces of the simplex give d < n - 1.
    """
    v_full = _full(v)
    n = len(v_full)
    d = len(_support(v_full)) - 1
    vol = fiber_volume([float(x) for x in v_full])
    return float(2 ** (d / 2) * p ** ((n - 1) - d / 2) * vol / math.factorial(n - 1))


def state_norm_asymptotics(
    v: Sequence, p_list: Sequence[int], k_twist: int = 0, resolution: Optional[int] = None
) -> Tuple[pd.DataFrame, float]:
    """
    Norms of isotropic states against the leading-order model.

    A fixed resolution must cover 4p at the largest p.

    Returns:
        (DataFrame with columns p, norm_squared, model, ratio, leakage,
         fitted exponent of norm_squared in p)
    """
    rows = []
    for p in p_list:
        state = isotropic_state(p, v, k_twist=k_twist, resolution=resolution)
        if not state.bohr_sommerfeld:
            logger.warning(f"Skipping p={p}: fibre is not Bohr-Sommerfeld")
            continue
        model = norm_model(p, v)
        rows.append({"p": p, "norm_squared": state.norm_squared, "model": model,
                     "ratio": state.norm_squared / model, "leakage": state.leakage})
    df = pd.DataFrame(rows, columns=["p", "norm_squared", "model", "ratio", "leakage"])
    if len(df) < 2:
        return df, float("nan")
    fit = linregress(np.log(df["p"].astype(float)), np.log(df["norm_squared"]))
    return df, float(fit.slope)


def _projective_rule(order: int, resolution: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gauss-Legendre in |z_2|^2 times trapezoid in the angle, for CP^1."""
    nodes, weights = np.polynomial.legendre.leggauss(order)
    x = (nodes + 1) / 2
    wx = weights / 2
    theta = np.arange(resolution) / resolution
    return x, wx, theta


def _projective_point(x: float, theta: float) -> np.ndarray:
    return np.array([math.sqrt(1 - x), math.sqrt(x) * np.exp(TWO_PI_I * theta)])


def _monomial(y: np.ndarray, mu: Tuple[int, ...]) -> complex:
    return complex(np.prod([y[j] ** mu[j] for j in range(len(mu))]) / math.sqrt(float(monomial_norm_squared(mu))))


def reproducing_check(p: int, z: np.ndarray, mu: Tuple[int, int], order: int = None, resolution: int = None) -> complex:
    """
    Integral over CP^1 of P_p(z, w) e_mu(w), which reproduces e_mu(z).
    """
    order = order or p + 4
    resolution = resolution or 2 * p + 4
    x, wx, theta = _projective_rule(order, resolution)
    total = 0j
    for xi, wi in zip(x, wx):
        for t in theta:
            w = _projective_point(xi, t)
            total += wi * bergman_eval(p, z, w) * _monomial(w, mu)
    return complex(total / resolution)


def toeplitz_matrix(p: int, f: Callable[[float, float], float], order: int = None, resolution: int = None) -> np.ndarray:
    """
    Toeplitz operator of a function on CP^1 in the normalized monomial basis.

    ``f(x, theta)`` with x = |z_2|^2. Entry (mu, nu) is ``<f e_nu, e_mu>``.
    """
    order = order or p + 8
    resolution = resolution or 2 * p + 8
    basis = multi_indices(2, p)
    x, wx, theta = _projective_rule(order, resolution)
    out = np.zeros((len(basis), len(basis)), dtype=complex)
    for xi, wi in zip(x, wx):
        for t in theta:
            y = _projective_point(xi, t)
            vals = np.array([_monomial(y, mu) for mu in basis])
            out += wi * f(xi, t) * np.outer(vals.conj(), vals)
    return out / resolution
