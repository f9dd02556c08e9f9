"""
Leading-order asymptotics of <g e_nu, e_mu> from intersection geometry.

Each transversal point x_q of g.Lambda_v meet Lambda_w contributes
``i^{kappa_q} exp(2 pi i k s eta_q) |det B_q|^{-1/2}``, where B_q is the
transversality pairing and eta_q the symplectic area of a loop through the
base point x_0 and x_q.
"""

import itertools
import logging
from fractions import Fraction
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from src.constants import HALF_FORM_SHIFT, TWO_PI_I, prefactor_power
from src.models.models import (
    AreaPath,
    ComponentPrediction,
    GZPattern,
    GZSCError,
    IntersectionPoint,
    IntersectionResult,
    MaslovMode,
    Prediction,
)
from src.services.coadjoint_geometry import (
    DegeneratePairingError,
    active_coordinates,
    gz_flow,
    torus_angles_between,
)
from src.services.gz_combinatorics import rho_shift
from src.services.intersection_solver import full_levels, torus_point, transversality_pairing

logger = logging.getLogger(__name__)

SINGULAR_DET = 1e-8
MAX_CALIBRATED_COMPONENTS = 6


class PredictionRefusedError(GZSCError):
    """Custom exception for intersections the leading-order formula does not cover"""
    pass


class QuadratureError(GZSCError):
    """Custom exception for area integrals that fail the refinement check"""
    pass


def semiclassical_level(n: int, degree: int, nu_suffix: Sequence[int]) -> Tuple[Fraction, Tuple[Fraction, ...]]:
    """
    Semiclassical parameter and levels of z^nu on CP^{n-1}.

    ``k = d + n/2`` and ``v_j = (nu_j + 1/2) / k`` for j = 2..n.
    """
    k = Fraction(degree) + n * HALF_FORM_SHIFT
    return k, tuple((Fraction(x) + HALF_FORM_SHIFT) / k for x in nu_suffix)


def flag_levels(lam: Sequence[int], p: int, pattern: GZPattern) -> Tuple[Tuple[Fraction, ...], Tuple[Fraction, ...]]:
    """
    Orbit and levels of a basis vector of V(p lam + rho_bar).

    Returns:
        (orbit eigenvalues (p lam + rho_bar + rho)/p,
         flat levels (nu^{(k)} + rho_k)/p over rows n-1..1)
    """
    shift = rho_shift(len(lam))
    top = pattern.rows[0]
    orbit = tuple((Fraction(x) + r) / p for x, r in zip(top, shift.rho))
    levels = tuple(
        (Fraction(x) + r) / p
        for row, rho_row in zip(pattern.rows[1:], shift.rho_tilde[1:])
        for x, r in zip(row, rho_row)
    )
    return orbit, levels


def bargmann_phase(path: AreaPath) -> float:
    """
    Discrete holonomy of the closed polygon leg1 + leg2.

    Toric nodes are unit vectors. Flag nodes are unitary frames with columns
    in decreasing eigenvalue order, weighted by ``m_k = lam_k - lam_{k+1}``
    (``m_n = lam_n``).
    """
    nodes = list(path.leg1) + list(path.leg2)
    if path.mode == "toric":
        return float(sum(np.angle(np.vdot(a, b)) for a, b in zip(nodes, nodes[1:] + nodes[:1])))
    weights = path.weights
    total = 0.0
    for a, b in zip(nodes, nodes[1:] + nodes[:1]):
        for k, m in enumerate(weights, start=1):
            if m == 0:
                continue
            total += m * np.angle(np.linalg.det(a[:, :k].conj().T @ b[:, :k]))
    return float(total)


def symplectic_area(path: AreaPath, tol: float = 1e-8, max_nodes: int = 1 << 14) -> float:
    """
    Normalized symplectic area eta = -Phi / (2 pi) of the loop.

    When the path can be regenerated at other resolutions, the value is
    Richardson-extrapolated from successive doublings and accepted once two
    extrapolations agree within ``tol``.

    Raises:
        QuadratureError: if the refinement does not settle
    """
    if path.refine is None:
        return -bargmann_phase(path) / (2 * np.pi)
    nodes = max(len(path.leg1), 32)
    raw = [-bargmann_phase(path.refine(nodes)) / (2 * np.pi)]
    previous = None
    while nodes < max_nodes:
        nodes *= 2
        raw.append(-bargmann_phase(path.refine(nodes)) / (2 * np.pi))
        extrapolated = (4 * raw[-1] - raw[-2]) / 3
        if previous is not None and abs(extrapolated - previous) < tol:
            return float(extrapolated)
        previous = extrapolated
    raise QuadratureError(f"Area did not settle below {tol} with {max_nodes} nodes")


def _continue(delta: np.ndarray, reference: Optional[np.ndarray]) -> np.ndarray:
    """Pick the representative of delta mod 1 closest to the reference branch."""
    if reference is None:
        return (delta + 0.5) % 1.0 - 0.5
    return reference + ((delta - reference + 0.5) % 1.0 - 0.5)


def build_toric_path(
    g: np.ndarray,
    base: IntersectionPoint,
    target: IntersectionPoint,
    nodes: int = 64,
    reference: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> Tuple[AreaPath, Tuple[np.ndarray, np.ndarray]]:
    """
    Loop from base to target inside g.Lambda_v and back inside Lambda_w.

    Both legs are straight lines in the torus angles.

    Returns:
        (path, (angle step of leg1, angle step of leg2)) for branch continuation
    """
    g = np.asarray(g, dtype=complex)
    v_full, w_full = full_levels(base.preimage.v), full_levels(base.point.v)
    d1 = _continue(target.preimage.theta - base.preimage.theta, None if reference is None else reference[0])
    d2 = _continue(base.point.theta - target.point.theta, None if reference is None else reference[1])
    t0_1, t0_2 = base.preimage.theta, target.point.theta

    def make(count: int) -> AreaPath:
        ts = np.linspace(0.0, 1.0, count)
        leg1 = [g @ torus_point(v_full, t0_1 + t * d1) for t in ts]
        leg2 = [torus_point(w_full, t0_2 + t * d2) for t in ts]
        return AreaPath(leg1=leg1, leg2=leg2, mode="toric", refine=make)

    return make(nodes), (d1, d2)


def _frame(x: np.ndarray) -> np.ndarray:
    _, vecs = np.linalg.eigh(x)
    return vecs[:, ::-1]


def orbit_weights(lam: Sequence[float]) -> Tuple[float, ...]:
    lam = [float(x) for x in lam]
    return tuple(lam[k] - lam[k + 1] for k in range(len(lam) - 1)) + (lam[-1],)


def build_flag_path(
    g: np.ndarray,
    lam: Sequence[float],
    base: IntersectionPoint,
    target: IntersectionPoint,
    nodes: int = 64,
    reference: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> Tuple[AreaPath, Tuple[np.ndarray, np.ndarray]]:
    """
    Loop through two points of g.Lambda_v meet Lambda_w along torus flows.

    Leg 1 flows the preimage of the base inside Lambda_v and maps it by g;
    leg 2 flows the target back to the base inside Lambda_w.
    """
    g = np.asarray(g, dtype=complex)
    coords = active_coordinates([float(x) for x in lam])
    y0, yq = base.preimage.alpha, target.preimage.alpha
    x0, xq = base.point.alpha, target.point.alpha
    d1 = _continue(torus_angles_between(y0, yq, coords), None if reference is None else reference[0])
    d2 = _continue(torus_angles_between(xq, x0, coords), None if reference is None else reference[1])
    weights = orbit_weights(lam)

    def make(count: int) -> AreaPath:
        ts = np.linspace(0.0, 1.0, count)
        leg1 = [g @ _frame(gz_flow(y0, t * d1, coords)) for t in ts]
        leg2 = [_frame(gz_flow(xq, t * d2, coords)) for t in ts]
        return AreaPath(leg1=leg1, leg2=leg2, mode="flag", weights=weights, refine=make)

    return make(nodes), (d1, d2)


def _signature(matrix: np.ndarray) -> int:
    sym = (matrix + matrix.T) / 2
    vals = np.linalg.eigvalsh(sym)
    scale = max(np.max(np.abs(vals)), 1e-300)
    return int(np.sum(vals > 1e-9 * scale) - np.sum(vals < -1e-9 * scale))


def predicted_maslov(pairings: Sequence[np.ndarray]) -> List[int]:
    """
    Experimental Maslov indices from pairing signatures relative to the base.

    ``kappa_q = (sig B_q - sig B_0) / 2 mod 4``.
    """
    if not pairings:
        return []
    base = _signature(pairings[0])
    return [((_signature(b) - base) // 2) % 4 for b in pairings]


def _check_transversal(result: IntersectionResult) -> None:
    for pt in result.points:
        if pt.component_dim > 0:
            raise PredictionRefusedError(
                f"Clean intersection of dimension {pt.component_dim}; use the envelope exponent instead"
            )
        if abs(pt.jac_det) < SINGULAR_DET:
            raise PredictionRefusedError(f"Pairing determinant {pt.jac_det:.2e} is singular; use envelope mode")


PathBuilder = Callable[[IntersectionPoint, IntersectionPoint, Optional[Tuple]], Tuple[AreaPath, Tuple]]


def components(
    result: IntersectionResult,
    g: np.ndarray,
    path_builder: PathBuilder,
    pairing_mode: str,
    references: Optional[List[Tuple]] = None,
) -> Tuple[List[ComponentPrediction], List[Tuple], List[np.ndarray]]:
    """
    Amplitude and area of every intersection point relative to the first.

    Returns:
        (components, branch references used, pairing matrices)
    """
    _check_transversal(result)
    pts = result.points
    comps, refs, pairings = [], [], []
    for q, pt in enumerate(pts):
        try:
            b = transversality_pairing(pt, g, mode=pairing_mode)
        except DegeneratePairingError as e:
            raise PredictionRefusedError(str(e)) from e
        pairings.append(b)
        if q == 0:
            eta, ref = 0.0, None
        else:
            ref_in = references[q] if references and q < len(references) else None
            path, ref = path_builder(pts[0], pt, ref_in)
            eta = symplectic_area(path)
        refs.append(ref)
        det = float(np.linalg.det(b))
        comps.append(ComponentPrediction(amplitude=abs(det) ** -0.5, eta=eta, jac_det=det))
    return comps, refs, pairings


def combine(
    p: int,
    k: float,
    comps: List[ComponentPrediction],
    power: float,
    maslov: Sequence[int],
    orientation: int = 1,
    mode: MaslovMode = MaslovMode.CALIBRATED,
) -> Prediction:
    """Sum the component contributions into the scaled prediction."""
    if not comps:
        return Prediction(p=p, k=k, components=[], total=0j, power=power, maslov_mode=mode,
                          decay=True, orientation=orientation)
    total = 0j
    for c, kappa in zip(comps, maslov):
        c.maslov = int(kappa)
        total += (1j ** kappa) * np.exp(TWO_PI_I * k * orientation * c.eta) * c.amplitude
    return Prediction(p=p, k=k, components=comps, total=complex(total), power=power,
                      maslov_mode=mode, orientation=orientation)


def predict_toric(
    p: int,
    k: float,
    g: np.ndarray,
    result: IntersectionResult,
    maslov: Optional[Sequence[int]] = None,
    orientation: int = -1,
    references: Optional[List[Tuple]] = None,
) -> Tuple[Prediction, List[Tuple]]:
    """
    Prediction for the monomial matrix element on CP^{n-1}.

    Without calibrated indices the signature rule supplies them.
    """
    n = np.asarray(g).shape[0]
    power = prefactor_power("toric", (1,) + (0,) * (n - 1))
    comps, refs, pairings = components(
        result, g, lambda a, b, r: build_toric_path(g, a, b, reference=r), "toric", references
    )
    mode = MaslovMode.CALIBRATED if maslov is not None else MaslovMode.PREDICTED
    kappas = list(maslov) if maslov is not None else predicted_maslov(pairings)
    return combine(p, k, comps, power, kappas, orientation, mode), refs


def predict_flag(
    p: int,
    g: np.ndarray,
    orbit: Sequence[float],
    result: IntersectionResult,
    maslov: Optional[Sequence[int]] = None,
    orientation: int = -1,
    references: Optional[List[Tuple]] = None,
) -> Tuple[Prediction, List[Tuple]]:
    """Prediction for a Gelfand-Zetlin matrix element of V(p lam + rho_bar)."""
    power = prefactor_power("flag", orbit)
    comps, refs, pairings = components(
        result, g, lambda a, b, r: build_flag_path(g, orbit, a, b, reference=r), "flag", references
    )
    mode = MaslovMode.CALIBRATED if maslov is not None else MaslovMode.PREDICTED
    kappas = list(maslov) if maslov is not None else predicted_maslov(pairings)
    return combine(p, float(p), comps, power, kappas, orientation, mode), refs


def phase_alignment(scaled_exact: complex, predicted: complex) -> Tuple[complex, float]:
    """
    Unit scalar z minimizing |z * exact - predicted| and the residual it leaves.
    """
    if abs(scaled_exact) == 0 or abs(predicted) == 0:
        return 1.0 + 0j, abs(predicted - scaled_exact)
    z = predicted * np.conj(scaled_exact)
    z /= abs(z)
    return complex(z), float(abs(z * scaled_exact - predicted))


def calibrate_maslov(samples: Sequence[Tuple[float, complex, List[ComponentPrediction]]]) -> Tuple[List[int], int]:
    """
    Fit Maslov indices kappa_q in Z/4 (kappa_0 = 0) and the orientation sign.

    Args:
        samples: (k, k^power * exact, components) at the calibration p values

    Returns:
        (kappa list, orientation) minimizing the summed modulus mismatch

    Raises:
        PredictionRefusedError: if there are too many components to enumerate
    """
    if not samples:
        raise PredictionRefusedError("No calibration samples")
    m = len(samples[0][2])
    if m == 0:
        return [], 1
    if m > MAX_CALIBRATED_COMPONENTS:
        raise PredictionRefusedError(f"{m} components exceed the calibration limit")
    best: Tuple[float, List[int], int] = (float("inf"), [0] * m, 1)
    for orientation in (-1, 1):
        for tail in itertools.product(range(4), repeat=m - 1):
            kappas = [0, *tail]
            cost = 0.0
            for k, scaled, comps in samples:
                total = sum(
                    (1j ** kappa) * np.exp(TWO_PI_I * k * orientation * c.eta) * c.amplitude
                    for c, kappa in zip(comps, kappas)
                )
                cost += (abs(scaled) - abs(total)) ** 2
            if cost < best[0] - 1e-15:
                best = (cost, kappas, orientation)
    logger.info(f"Calibrated Maslov indices {best[1]}, orientation {best[2]}, cost {best[0]:.3e}")
    return best[1], best[2]


def rms_envelope(comps: Sequence[ComponentPrediction]) -> float:
    """Window-averaged |k^power <g e_nu, e_mu>|^2 predicted by incoherent summation."""
    return float(sum(c.amplitude ** 2 for c in comps))
