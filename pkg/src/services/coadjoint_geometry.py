"""
Hermitian-matrix model of coadjoint orbits of U(n).

Gelfand-Zetlin map (eigenvalues of leading minors), toric moment map on
CP^{n-1}, KKS pairing, the Gelfand-Zetlin torus action and explicit
reconstruction of points on a Gelfand-Zetlin fibre.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.stats import unitary_group

from src.config import get_settings
from src.constants import HERMITIAN_TOL, TWO_PI_I, pairing
from src.models.models import GZSCError, HermitianPoint, HighestWeight, MinorSpectrum
from src.services.gz_combinatorics import WeightLike, as_weight, distance_to_boundary, unflatten

logger = logging.getLogger(__name__)

Coordinate = Tuple[int, int]  # (level k, 0-based index j within row k)
MatrixLike = Union[HermitianPoint, np.ndarray]


class FiberReconstructionError(GZSCError):
    """Custom exception for fibre points that cannot be built or refined"""
    pass


class DegeneratePairingError(GZSCError):
    """Custom exception for minors with colliding eigenvalues"""
    pass


def _matrix(alpha: MatrixLike) -> np.ndarray:
    a = alpha.alpha if isinstance(alpha, HermitianPoint) else alpha
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("alpha must be a square matrix")
    if np.max(np.abs(a - a.conj().T)) > HERMITIAN_TOL * max(1.0, np.max(np.abs(a))):
        raise ValueError("alpha is not Hermitian")
    return a


def _eigh_desc(block: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    vals, vecs = np.linalg.eigh(block)
    return vals[::-1], vecs[:, ::-1]


def gz_map(alpha: MatrixLike) -> MinorSpectrum:
    """
    Sorted eigenvalues of every leading minor.

    Returns:
        MinorSpectrum with rows for k = n, n-1, ..., 1, each nonincreasing
    """
    a = _matrix(alpha)
    n = a.shape[0]
    rows = [np.linalg.eigvalsh(a[:k, :k])[::-1] for k in range(n, 0, -1)]
    return MinorSpectrum(rows=rows)


def coordinate_order(n: int) -> List[Coordinate]:
    """Flat polytope coordinate order: rows n-1 down to 1, left to right."""
    return [(k, j) for k in range(n - 1, 0, -1) for j in range(k)]


def active_coordinates(lam: Union[WeightLike, Sequence[float]]) -> List[Coordinate]:
    """
    Coordinates that are not constant on the orbit.

    Entry j of row k lies between lam_j and lam_{j+n-k}; it is frozen when
    those agree. Accepts integral weights or real orbit eigenvalues.
    """
    e = lam.entries if isinstance(lam, HighestWeight) else tuple(lam)
    n = len(e)
    return [(k, j) for k, j in coordinate_order(n) if e[j] != e[j + n - k]]


def gz_coordinates(alpha: MatrixLike, coords: Sequence[Coordinate]) -> np.ndarray:
    """Values of selected minor eigenvalues."""
    spectrum = gz_map(alpha)
    n = len(spectrum.rows)
    return np.array([spectrum.rows[n - k][j] for k, j in coords])


def gz_gradients(alpha: MatrixLike, coords: Sequence[Coordinate] = None, gap_tol: float = 1e-9) -> List[np.ndarray]:
    """
    Differentials of the minor eigenvalues as Hermitian matrices.

    The differential of M_j^{(k)} at alpha is the projector u u^H onto the
    corresponding eigenvector of the k x k minor, padded with zeros.

    Raises:
        DegeneratePairingError: if the eigenvalue is not simple
    """
    a = _matrix(alpha)
    n = a.shape[0]
    coords = coordinate_order(n) if coords is None else coords
    cache: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
    out = []
    for k, j in coords:
        if k not in cache:
            cache[k] = _eigh_desc(a[:k, :k])
        vals, vecs = cache[k]
        gaps = [abs(vals[j] - vals[i]) for i in range(k) if i != j]
        if gaps and min(gaps) < gap_tol:
            raise DegeneratePairingError(f"Eigenvalue {j} of the {k}x{k} minor is not simple")
        u = np.zeros(n, dtype=complex)
        u[:k] = vecs[:, j]
        out.append(np.outer(u, u.conj()))
    return out


def toric_moment(z: np.ndarray) -> np.ndarray:
    """(|z_2|^2, ..., |z_n|^2) of a unit vector."""
    z = np.asarray(z, dtype=complex)
    norm = np.linalg.norm(z)
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"z must be a unit vector, |z| = {norm}")
    return np.abs(z[1:]) ** 2


def projector(z: np.ndarray) -> np.ndarray:
    """Point of CP^{n-1} as the rank-one orbit point z z^H."""
    z = np.asarray(z, dtype=complex)
    return np.outer(z, z.conj())


def _fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


def bohr_sommerfeld_level(v: Sequence, p: int) -> bool:
    """True iff p*v is integral (exact rational test)."""
    return all((_fraction(x) * p).denominator == 1 for x in v)


def kks_pairing(alpha: MatrixLike, xi1: np.ndarray, xi2: np.ndarray) -> float:
    """omega_alpha(xi1, xi2) = <alpha, [xi1, xi2]>."""
    a = _matrix(alpha)
    return pairing(a, xi1 @ xi2 - xi2 @ xi1)


def poisson_bracket(alpha: MatrixLike, a: np.ndarray, b: np.ndarray) -> float:
    """Poisson bracket of Tr(. a) and Tr(. b) at alpha."""
    return kks_pairing(alpha, TWO_PI_I * a, TWO_PI_I * b)


def _phase_rotation(p: np.ndarray, theta: float) -> np.ndarray:
    return np.eye(p.shape[0], dtype=complex) + (np.exp(TWO_PI_I * theta) - 1.0) * p


def gz_flow(alpha: MatrixLike, angles: Sequence[float], coords: Sequence[Coordinate] = None) -> np.ndarray:
    """
    Act by the Gelfand-Zetlin torus.

    Each angle moves alpha along the Hamiltonian flow of one minor eigenvalue,
    ``x -> exp(2 pi i t P) x exp(-2 pi i t P)``; flows commute and have period 1.

    Args:
        alpha: Orbit point
        angles: One angle per coordinate
        coords: Coordinates to flow (default: all)

    Returns:
        The moved Hermitian matrix
    """
    x = _matrix(alpha).copy()
    coords = coordinate_order(x.shape[0]) if coords is None else list(coords)
    if len(angles) != len(coords):
        raise ValueError("Need one angle per coordinate")
    for (k, j), t in zip(coords, angles):
        if t == 0:
            continue
        (proj,) = gz_gradients(x, [(k, j)])
        w = _phase_rotation(proj, t)
        x = w @ x @ w.conj().T
        x = (x + x.conj().T) / 2
    return x


def fiber_phases(alpha: MatrixLike, coords: Sequence[Coordinate]) -> np.ndarray:
    """
    Phases of the bordering columns in the eigenbases of the minors.

    With the eigenvector u of the k-minor normalized so that its last entry is
    real positive, the phase of ``u^H x[:k, k]`` turns by exactly t under the
    flow of that eigenvalue and is unchanged by flows at lower levels.
    """
    a = _matrix(alpha)
    out = []
    cache: Dict[int, np.ndarray] = {}
    for k, j in coords:
        if k not in cache:
            cache[k] = _eigh_desc(a[:k, :k])[1]
        u = cache[k][:, j]
        if abs(u[-1]) > 0:
            u = u * (abs(u[-1]) / u[-1])
        out.append(np.angle(np.vdot(u, a[:k, k])) / (2 * np.pi))
    return np.array(out)


def _wrap(x: np.ndarray) -> np.ndarray:
    return (np.asarray(x) + 0.5) % 1.0 - 0.5


def torus_angles_between(x0: MatrixLike, x1: MatrixLike, coords: Sequence[Coordinate]) -> np.ndarray:
    """
    Angles t with gz_flow(x0, t) = x1 for two points of the same fibre.

    Levels are solved top-down: flows at level k shift the level-k phases by
    their angles and leave higher levels untouched.
    """
    a0, a1 = _matrix(x0), _matrix(x1)
    target = fiber_phases(a1, coords)
    angles = np.zeros(len(coords))
    levels = sorted({k for k, _ in coords}, reverse=True)
    for level in levels:
        idx = [i for i, (k, _) in enumerate(coords) if k == level]
        current = fiber_phases(gz_flow(a0, angles, coords), coords)
        angles[idx] += _wrap(target[idx] - current[idx])
    residual = np.max(np.abs(gz_flow(a0, angles, coords) - a1))
    if residual > 1e-7:
        logger.warning(f"Torus angle recovery left residual {residual:.2e}")
    return angles


def fiber_volume(v_full: Sequence[float]) -> float:
    """
    Riemannian volume of the torus {|z_j|^2 = v_j} in CP^{n-1}.

    ``v_full`` includes v_1 = 1 - sum of the others. Coordinates equal to 0
    drop out, so faces give lower-dimensional isotropic tori.
    """
    support = [float(x) for x in v_full if float(x) > 0]
    d = len(support) - 1
    return float((4 * math.pi) ** (d / 2) * math.sqrt(math.prod(support)))


def random_orbit_point(lam: Sequence[float], rng: Optional[np.random.Generator] = None) -> HermitianPoint:
    """Haar-random conjugate of diag(lam)."""
    rng = rng or np.random.default_rng()
    u = unitary_group.rvs(len(lam), random_state=rng)
    alpha = u @ np.diag(np.asarray(lam, dtype=float)) @ u.conj().T
    return HermitianPoint(alpha=(alpha + alpha.conj().T) / 2, lam=tuple(float(x) for x in lam))


def _rows(lam: Sequence[float], v: Sequence) -> List[np.ndarray]:
    """Rows n, n-1, ..., 1 as float arrays."""
    n = len(lam)
    rows = [np.array([float(x) for x in lam])]
    rows += [np.array([float(x) for x in row]) for row in unflatten(list(v), n)]
    return rows


def _is_diagonal_pattern(lam: Sequence, v: Sequence) -> bool:
    n = len(lam)
    return all(
        abs(float(x) - float(lam[j])) < 1e-12
        for row in unflatten(list(v), n)
        for j, x in enumerate(row)
    )


def _interlacing(rows: List[np.ndarray], tol: float = 1e-12) -> bool:
    for upper, lower in zip(rows, rows[1:]):
        for j, x in enumerate(lower):
            if x > upper[j] + tol or x < upper[j + 1] - tol:
                return False
    return True


def _clusters(mu: np.ndarray, tol: float) -> List[List[int]]:
    """Indices of mu (nonincreasing) grouped by equal value."""
    out: List[List[int]] = []
    for i, x in enumerate(mu):
        if out and abs(mu[out[-1][0]] - x) <= tol:
            out[-1].append(i)
        else:
            out.append([i])
    return out


def border_weights(mu: np.ndarray, nu: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """
    Squared border moduli taking the k-minor spectrum mu to the (k+1)-minor spectrum nu.

    One entry per eigenvalue of mu. A repeated eigenvalue of mu is bordered
    through the first vector of its eigenspace only; the rest of the block is
    carried through unchanged and one copy of the value is removed from nu per
    extra multiplicity before ``|b_m|^2 = -prod(m - nu') / prod(m - m')``.

    Raises:
        FiberReconstructionError: if mu and nu do not interlace
    """
    clusters = _clusters(mu, tol)
    reduced = list(nu)
    for cluster in clusters:
        m = mu[cluster[0]]
        for _ in range(len(cluster) - 1):
            j = int(np.argmin([abs(x - m) for x in reduced]))
            if abs(reduced[j] - m) > tol:
                raise FiberReconstructionError(f"Eigenvalue {m} of multiplicity {len(cluster)} is not interlaced")
            reduced.pop(j)
    values = np.array([mu[c[0]] for c in clusters])
    reduced = np.array(reduced)
    mod2 = np.zeros(len(mu))
    for c, cluster in enumerate(clusters):
        others = np.delete(values, c)
        mod2[cluster[0]] = -np.prod(values[c] - reduced) / np.prod(values[c] - others)
    if np.any(mod2 < -1e-10):
        raise FiberReconstructionError(f"Negative border weight {mod2.min():.2e}")
    return np.clip(mod2, 0, None)


def flag_fiber_point(lam: Sequence[float], v: Sequence, phases: Sequence[float]) -> np.ndarray:
    """
    Build the orbit point with minor spectra v and bordering phases ``phases``.

    Each (k+1)-minor borders the k-minor in its eigenbasis with
    ``c = sum(mu^{(k+1)}) - sum(mu^{(k)})`` and weights from border_weights.
    v holds every flat coordinate (frozen ones included); phases follow the
    active coordinates of lam, so a regular lam takes one phase per entry.

    Raises:
        FiberReconstructionError: if v does not interlace
    """
    rows = _rows(lam, v)
    n = len(lam)
    if not _interlacing(rows):
        raise FiberReconstructionError("Fibre levels do not interlace")
    active = active_coordinates(lam)
    if len(phases) != len(active):
        raise ValueError(f"Need {len(active)} phases, got {len(phases)}")
    phase_of = dict(zip(active, phases))
    alpha = np.array([[rows[-1][0]]], dtype=complex)
    for k in range(1, n):
        mu, nu = rows[n - k], rows[n - k - 1]
        vals, vecs = _eigh_desc(alpha)
        # keep the eigenvector convention used by fiber_phases
        for i in range(k):
            if abs(vecs[-1, i]) > 0:
                vecs[:, i] *= abs(vecs[-1, i]) / vecs[-1, i]
        mod2 = border_weights(mu, nu)
        row_phases = np.array([phase_of.get((k, i), 0.0) for i in range(k)], dtype=float)
        b = vecs @ (np.sqrt(mod2) * np.exp(TWO_PI_I * row_phases))
        c = float(np.sum(nu) - np.sum(mu))
        nxt = np.zeros((k + 1, k + 1), dtype=complex)
        nxt[:k, :k] = alpha
        nxt[:k, k] = b
        nxt[k, :k] = b.conj()
        nxt[k, k] = c
        alpha = nxt
    return (alpha + alpha.conj().T) / 2


def _refine(alpha: np.ndarray, target: np.ndarray, coords: List[Coordinate], iters: int = 8) -> np.ndarray:
    """Gauss-Newton along conjugation directions toward gz coordinates ``target``."""
    n = alpha.shape[0]
    basis = []
    for a in range(n):
        for b in range(a, n):
            h = np.zeros((n, n), dtype=complex)
            h[a, b] = h[b, a] = 1.0
            basis.append(h)
            if a != b:
                h = np.zeros((n, n), dtype=complex)
                h[a, b], h[b, a] = -1j, 1j
                basis.append(h)
    x = alpha
    for _ in range(iters):
        resid = gz_coordinates(x, coords) - target
        if np.max(np.abs(resid), initial=0.0) < 1e-13:
            break
        grads = gz_gradients(x, coords)
        jac = np.array([[np.real(np.trace(g @ (1j * (h @ x - x @ h)))) for h in basis] for g in grads])
        step, *_ = np.linalg.lstsq(jac, -resid, rcond=None)
        gen = sum(s * h for s, h in zip(step, basis))
        w = np.linalg.matrix_power(np.eye(n) + 1j * gen / 64, 64)
        w, _ = np.linalg.qr(w)
        x = w @ x @ w.conj().T
        x = (x + x.conj().T) / 2
    return x


def flag_fiber_sample(lam: WeightLike, v: Sequence, count: int, seed: int = 0) -> List[HermitianPoint]:
    """
    Sample points of the Gelfand-Zetlin fibre over v.

    Args:
        lam: Regular highest weight
        v: Flat coordinates (rows n-1 down to 1), strictly interlacing
        count: Number of samples
        seed: Seed for the torus phases

    Returns:
        HermitianPoints whose minor spectra equal v within 1e-8

    Raises:
        FiberReconstructionError: if v is on the boundary (other than the
            diagonal pattern) or a sample fails to converge
    """
    lam = as_weight(lam)
    n = lam.n
    lam_f = [float(x) for x in lam.entries]
    if _is_diagonal_pattern(lam.entries, v):
        return [HermitianPoint(alpha=np.diag(lam_f).astype(complex), lam=tuple(lam_f)) for _ in range(count)]
    if not lam.regular:
        raise FiberReconstructionError("flag_fiber_sample needs a regular highest weight")
    if distance_to_boundary(lam, v) <= 0:
        raise FiberReconstructionError(f"v is not interior to the polytope of {lam}")
    coords = coordinate_order(n)
    target = np.array([float(x) for x in v])
    phase_sets = np.random.default_rng(seed).random((count, len(coords)))

    def build(phases: np.ndarray) -> HermitianPoint:
        alpha = flag_fiber_point(lam_f, v, phases)
        err = np.max(np.abs(gz_coordinates(alpha, coords) - target))
        if err > 1e-10:
            alpha = _refine(alpha, target, coords)
            err = np.max(np.abs(gz_coordinates(alpha, coords) - target))
        if err > 1e-8:
            raise FiberReconstructionError(f"Fibre sample did not converge, residual {err:.2e}")
        return HermitianPoint(alpha=alpha, lam=tuple(lam_f))

    with ThreadPoolExecutor(max_workers=get_settings().max_workers) as pool:
        samples = list(pool.map(build, phase_sets))
    logger.debug(f"Sampled {count} points on the fibre over {list(map(str, v))}")
    return samples
