"""
Locating g.Lambda_v meet Lambda_w and the pairing that weighs each point.

Toric mode solves ``|(g z)_j|^2 = w_j`` for z on the torus ``|z_j|^2 = v_j``
by Newton on the torus angles. Flag mode moves a point of Lambda_w by the
Gelfand-Zetlin torus until the minor spectra of ``g^H x g`` equal v.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from src.config import get_settings
from src.constants import TWO_PI_I
from src.models.models import (
    HermitianPoint,
    IntersectionPoint,
    IntersectionResult,
    SolverConfig,
    ToricFiberPoint,
)
from src.services.coadjoint_geometry import (
    Coordinate,
    DegeneratePairingError,
    FiberReconstructionError,
    active_coordinates,
    coordinate_order,
    flag_fiber_point,
    gz_coordinates,
    gz_flow,
    gz_gradients,
    poisson_bracket,
    projector,
    toric_moment,
)

logger = logging.getLogger(__name__)

MAX_STEP = 0.5
RANK_TOL = 1e-7


def full_levels(v: Sequence[float]) -> np.ndarray:
    """Prepend v_1 = 1 - sum(v) to toric levels."""
    v = np.array([float(x) for x in v])
    return np.concatenate([[1.0 - v.sum()], v])


def gauge_fix(z: np.ndarray) -> np.ndarray:
    """Rotate the overall phase so the largest coordinate is real positive."""
    z = np.asarray(z, dtype=complex)
    mods = np.abs(z)
    # first index within rounding of the maximum, so equal levels gauge alike
    j = int(np.argmax(mods >= mods.max() - 1e-12))
    return z * (abs(z[j]) / z[j])


def toric_angles(z: np.ndarray) -> np.ndarray:
    """Angles of all n coordinates relative to the largest one, in [0, 1)."""
    z = gauge_fix(z)
    return (np.angle(z) / (2 * np.pi)) % 1.0


def torus_point(v_full: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """z_j = sqrt(v_j) exp(2 pi i theta_j)."""
    return np.sqrt(np.clip(v_full, 0, None)) * np.exp(TWO_PI_I * np.asarray(theta))


def _rank(jac: np.ndarray) -> int:
    if jac.size == 0:
        return 0
    s = np.linalg.svd(jac, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > RANK_TOL * s[0]))


def _start_angles(dim: int, total: int, rng: np.random.Generator) -> np.ndarray:
    """Grid-seeded starts followed by uniform random ones."""
    if dim == 0:
        return np.zeros((1, 0))
    per_axis = max(1, int(np.floor((total / 2) ** (1.0 / dim))))
    axis = (np.arange(per_axis) + 0.5) / per_axis
    grid = np.array(np.meshgrid(*([axis] * dim), indexing="ij")).reshape(dim, -1).T
    extra = rng.random((max(total - len(grid), 0), dim))
    return np.vstack([grid, extra])


def _newton(
    residual: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    retract: Callable[[np.ndarray, np.ndarray], np.ndarray],
    x0: np.ndarray,
    config: SolverConfig,
    tol: float,
) -> Tuple[np.ndarray, float, bool]:
    """
    Gauss-Newton with step capping and backtracking.

    Returns:
        (final state, final squared residual, converged)
    """
    x = x0
    r = residual(x)
    f = float(np.dot(r, r))
    for _ in range(config.max_iter):
        if np.max(np.abs(r), initial=0.0) < tol:
            return x, f, True
        step, *_ = np.linalg.lstsq(jacobian(x), -r, rcond=None)
        norm = np.linalg.norm(step)
        if norm > MAX_STEP:
            step *= MAX_STEP / norm
        t = 1.0
        while True:
            x_new = retract(x, t * step)
            r_new = residual(x_new)
            f_new = float(np.dot(r_new, r_new))
            if f_new < f or t < 1e-4:
                break
            t /= 2
        if f_new >= f and t < 1e-4:
            return x, f, False
        x, r, f = x_new, r_new, f_new
    return x, f, bool(np.max(np.abs(r), initial=0.0) < tol)


def _dedup(candidates: List[Tuple[tuple, object]], distance: Callable, radius: float) -> List[object]:
    candidates = sorted(candidates, key=lambda c: c[0])
    kept: List[object] = []
    for _, c in candidates:
        if all(distance(c, k) > radius for k in kept):
            kept.append(c)
    return kept


def _sort_key(x: np.ndarray) -> tuple:
    flat = np.asarray(x).ravel()
    return tuple(round(float(t), 9) for pair in zip(flat.real, flat.imag) for t in pair)


def _finish(points: List[IntersectionPoint], distance: Callable) -> None:
    for i, pt in enumerate(points):
        others = [distance(pt, q) for j, q in enumerate(points) if j != i]
        pt.min_distance = min(others) if others else float("inf")


def toric_intersections(g: np.ndarray, v: Sequence[float], w: Sequence[float], config: SolverConfig = None) -> IntersectionResult:
    """
    Points of g.Lambda_v meet Lambda_w on CP^{n-1}.

    Args:
        g: n x n unitary
        v: Source levels (|z_2|^2, ..., |z_n|^2)
        w: Target levels
        config: Multistart settings; the number of starts is scaled by n-1

    Returns:
        IntersectionResult; each point carries x = g z in Lambda_w and its
        preimage z in Lambda_v. Certificate is "none-found" when no start
        converged, with the smallest squared residual seen.
    """
    config = config or SolverConfig()
    g = np.asarray(g, dtype=complex)
    n = g.shape[0]
    v_full, w_arr = full_levels(v), np.array([float(x) for x in w])
    gauge = int(np.argmax(v_full))
    free = [l for l in range(n) if l != gauge and v_full[l] > 0]
    tol = config.newton_tol

    def z_of(angles: np.ndarray) -> np.ndarray:
        theta = np.zeros(n)
        theta[free] = angles
        return torus_point(v_full, theta)

    def residual(angles):
        return np.abs(g @ z_of(angles))[1:] ** 2 - w_arr

    def jacobian(angles):
        z = z_of(angles)
        y = g @ z
        return np.array([
            [2 * np.real(np.conj(y[j]) * g[j, l] * TWO_PI_I * z[l]) for l in free]
            for j in range(1, n)
        ]).reshape(n - 1, len(free))

    def retract(angles, step):
        return (angles + step) % 1.0

    total = config.starts * (n - 1)
    rng = np.random.default_rng(config.seed)
    starts = _start_angles(len(free), total, rng)

    def run(a0):
        return _newton(residual, jacobian, retract, a0, config, tol)

    with ThreadPoolExecutor(max_workers=get_settings().max_workers) as pool:
        outcomes = list(pool.map(run, starts))

    floor = min(f for _, f, _ in outcomes)
    failed = sum(1 for _, _, ok in outcomes if not ok)
    converged = [a for a, _, ok in outcomes if ok]
    if not converged:
        logger.info(f"No intersection found from {len(starts)} starts, residual floor {floor:.3e}")
        return IntersectionResult(points=[], certificate="none-found", residual_floor=floor,
                                  starts=len(starts), failed_starts=failed)

    def pdist(a, b):
        return float(np.linalg.norm(projector(g @ z_of(a)) - projector(g @ z_of(b))))

    kept = _dedup([(_sort_key(gauge_fix(g @ z_of(a))), a) for a in converged], pdist, config.dedup_radius)
    kept = _merge_components(kept, residual, jacobian, len(free), tol)

    points = []
    for cid, (a, dim) in enumerate(kept):
        z = z_of(a)
        x = gauge_fix(g @ z)
        check = max(np.max(np.abs(toric_moment(z / np.linalg.norm(z)) - v_full[1:])),
                    np.max(np.abs(toric_moment(x / np.linalg.norm(x)) - w_arr)))
        pt = IntersectionPoint(
            point=ToricFiberPoint(v=w_arr, theta=toric_angles(x), z=x),
            preimage=ToricFiberPoint(v=v_full[1:], theta=toric_angles(z), z=gauge_fix(z)),
            residual=float(check),
            jac_det=0.0,
            component_id=cid,
            component_dim=dim,
        )
        if dim == 0:
            try:
                pt.jac_det = float(np.linalg.det(transversality_pairing(pt, g)))
            except DegeneratePairingError:
                logger.warning(f"Degenerate pairing at toric point {cid}")
        points.append(pt)
    _finish(points, lambda a, b: float(np.linalg.norm(projector(a.point.z) - projector(b.point.z))))
    logger.debug(f"Toric search: {len(points)} points from {len(starts)} starts ({failed} failed)")
    return IntersectionResult(points=points, certificate="found", residual_floor=floor,
                              starts=len(starts), failed_starts=failed)


def _merge_components(kept, residual, jacobian, dim, tol) -> List[Tuple[np.ndarray, int]]:
    """
    Attach a component dimension to each root and merge roots of the same
    clean component.

    Dimension is the rank deficiency of the Jacobian. Two roots of positive
    dimension share a component when the straight angle path between them
    stays on the intersection.
    """
    out: List[Tuple[np.ndarray, int]] = []
    for a in kept:
        d = dim - _rank(jacobian(a))
        if d > 0:
            same = False
            for b, db in out:
                if db <= 0:
                    continue
                delta = ((a - b) + 0.5) % 1.0 - 0.5
                if all(np.max(np.abs(residual((b + t * delta) % 1.0)), initial=0.0) < 1e3 * tol
                       for t in np.linspace(0.2, 0.8, 4)):
                    same = True
                    break
            if same:
                continue
        out.append((a, d))
    return out


def _pairing_matrix(x: np.ndarray, left: List[np.ndarray], right: List[np.ndarray]) -> np.ndarray:
    return np.array([[poisson_bracket(x, a, b) for b in right] for a in left])


def transversality_pairing(point, g: np.ndarray, mode: str = "toric", coords: Sequence[Coordinate] = None) -> np.ndarray:
    """
    Matrix of brackets between the pushed source functions and the target ones.

    Toric mode: entry (j, k) is ``alpha([Ad_g xi_j, xi_k])`` with
    ``xi_j = 2 pi i E_jj`` for j, k = 2..n. Flag mode: entry (b, a) is
    ``{g_* M_b, M_a}(x)`` over the given Gelfand-Zetlin coordinates.

    Args:
        point: IntersectionPoint, a unit vector (toric) or Hermitian matrix (flag)
        g: The unitary
        mode: "toric" or "flag"
        coords: Flag-mode coordinates (default: active coordinates of x)

    Raises:
        DegeneratePairingError: if a minor of x or g^H x g has a repeated eigenvalue
    """
    g = np.asarray(g, dtype=complex)
    n = g.shape[0]
    if isinstance(point, IntersectionPoint):
        point = point.point
    if mode == "toric":
        z = point.z if isinstance(point, ToricFiberPoint) else np.asarray(point)
        alpha = projector(z / np.linalg.norm(z))
        units = []
        for j in range(1, n):
            e = np.zeros((n, n), dtype=complex)
            e[j, j] = 1.0
            units.append(e)
        return _pairing_matrix(alpha, [g @ e @ g.conj().T for e in units], units)
    if mode == "flag":
        x = point.alpha if isinstance(point, HermitianPoint) else np.asarray(point, dtype=complex)
        if coords is None:
            coords = active_coordinates(np.linalg.eigvalsh(x)[::-1].round(12))
        y = g.conj().T @ x @ g
        pushed = [g @ q @ g.conj().T for q in gz_gradients(y, coords)]
        return _pairing_matrix(x, pushed, gz_gradients(x, coords))
    raise ValueError(f"Unknown pairing mode: {mode}")


def flag_intersections(
    lam: Sequence[float],
    g: np.ndarray,
    v: Sequence[float],
    w: Sequence[float],
    config: SolverConfig = None,
) -> IntersectionResult:
    """
    Points of g.Lambda_v meet Lambda_w on the coadjoint orbit through diag(lam).

    Starts are random points of Lambda_w; Newton runs on the torus angles of
    Lambda_w against ``M(g^H x g) - v``. The residual reported per point is
    ``|M(x) - w|^2 + |M(g^H x g) - v|^2``.

    v and w hold every flat coordinate. On a singular orbit such as
    lam = (1, 0, ..., 0) only the active coordinates enter the equations and
    the torus angles.
    """
    config = config or SolverConfig()
    g = np.asarray(g, dtype=complex)
    lam = [float(x) for x in lam]
    coords = active_coordinates(lam)
    flat = coordinate_order(len(lam))
    w_full = np.array([float(x) for x in w])
    index = [flat.index(c) for c in coords]
    v_arr, w_arr = np.array([float(x) for x in v])[index], w_full[index]
    tol = max(config.newton_tol, 1e-10)
    n_coords = len(coords)
    total = config.starts * len(lam) - config.starts

    def residual(x):
        return gz_coordinates(g.conj().T @ x @ g, coords) - v_arr

    def jacobian(x):
        return transversality_pairing(x, g, mode="flag", coords=coords)

    def retract(x, step):
        return gz_flow(x, step, coords)

    rng = np.random.default_rng(config.seed)
    phase_sets = rng.random((max(total, 1), n_coords))

    def run(phases):
        try:
            x0 = flag_fiber_point(lam, w_full, phases)
            return _newton(residual, jacobian, retract, x0, config, tol)
        except (DegeneratePairingError, FiberReconstructionError, np.linalg.LinAlgError) as e:
            logger.debug(f"Flag start failed: {e}")
            return None, float("inf"), False

    with ThreadPoolExecutor(max_workers=get_settings().max_workers) as pool:
        outcomes = list(pool.map(run, phase_sets))

    floor = min(f for _, f, _ in outcomes)
    failed = sum(1 for _, _, ok in outcomes if not ok)
    converged = [x for x, _, ok in outcomes if ok]
    if failed:
        logger.warning(f"{failed} of {len(outcomes)} flag starts did not converge")
    if not converged:
        logger.info(f"No flag intersection found, residual floor {floor:.3e}")
        return IntersectionResult(points=[], certificate="none-found", residual_floor=floor,
                                  starts=len(outcomes), failed_starts=failed)

    kept = _dedup([(_sort_key(x), x) for x in converged],
                  lambda a, b: float(np.linalg.norm(a - b)), config.dedup_radius)
    points = []
    for cid, x in enumerate(kept):
        y = g.conj().T @ x @ g
        f = float(np.sum((gz_coordinates(x, coords) - w_arr) ** 2) + np.sum((gz_coordinates(y, coords) - v_arr) ** 2))
        jac = jacobian(x)
        dim = n_coords - _rank(jac)
        points.append(IntersectionPoint(
            point=HermitianPoint(alpha=x, lam=tuple(lam)),
            preimage=HermitianPoint(alpha=(y + y.conj().T) / 2, lam=tuple(lam)),
            residual=f,
            jac_det=float(np.linalg.det(jac)) if dim == 0 else 0.0,
            component_id=cid,
            component_dim=dim,
        ))
    _finish(points, lambda a, b: float(np.linalg.norm(a.point.alpha - b.point.alpha)))
    logger.debug(f"Flag search: {len(points)} points from {len(outcomes)} starts")
    return IntersectionResult(points=points, certificate="found", residual_floor=floor,
                              starts=len(outcomes), failed_starts=failed)


def envelope_exponent(result: IntersectionResult, source_dim: int, target_dim: int) -> Optional[float]:
    """
    Decay exponent of |<g s_v, s_w>| for a clean intersection.

    ``-(dim Lambda_v + dim Lambda_w)/4 + dim Y / 2`` for the largest component.
    """
    dims = [p.component_dim for p in result.points]
    if not dims:
        return None
    return -(source_dim + target_dim) / 4 + max(dims) / 2
