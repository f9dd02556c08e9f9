"""
Domain types shared by the gzsc services.

Validated inputs are pydantic models; numeric results are plain dataclasses
carrying numpy arrays.
"""

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class GZSCError(Exception):
    """Base exception for all gzsc failures"""
    pass


class ConfigError(GZSCError):
    """Custom exception for invalid experiment configuration"""
    pass


class HighestWeight(BaseModel):
    """Highest weight of an irreducible U(n) representation"""
    model_config = ConfigDict(frozen=True)

    entries: Tuple[int, ...] = Field(..., min_length=1, description="Nonincreasing integer vector")

    @field_validator("entries")
    @classmethod
    def validate_monotone(cls, v):
        """Reject weights that are not nonincreasing"""
        for a, b in zip(v, v[1:]):
            if a < b:
                raise ValueError(f"Highest weight must be nonincreasing, got {v}")
        return tuple(int(x) for x in v)

    @classmethod
    def of(cls, *entries: int) -> "HighestWeight":
        return cls(entries=tuple(entries))

    @property
    def n(self) -> int:
        return len(self.entries)

    @property
    def regular(self) -> bool:
        return all(a > b for a, b in zip(self.entries, self.entries[1:]))

    def scaled(self, p: int, shift: Tuple[int, ...] = None) -> "HighestWeight":
        """Return p*lambda (+ shift)."""
        shift = shift or (0,) * self.n
        return HighestWeight(entries=tuple(p * a + s for a, s in zip(self.entries, shift)))

    def __str__(self) -> str:
        return ",".join(str(a) for a in self.entries)


@dataclass(frozen=True, order=True)
class GZPattern:
    """
    Gelfand-Zetlin pattern stored top row first.

    ``rows[0]`` is the highest weight (length n), ``rows[-1]`` has length 1.
    """
    rows: Tuple[Tuple[int, ...], ...]

    @property
    def n(self) -> int:
        return len(self.rows[0])

    def row(self, k: int) -> Tuple[int, ...]:
        """Row of length k (1 <= k <= n); row 0 is empty."""
        if k == 0:
            return ()
        return self.rows[self.n - k]

    def coordinates(self) -> Tuple[int, ...]:
        """Polytope coordinates: rows n-1 down to 1, flattened."""
        return tuple(x for r in self.rows[1:] for x in r)

    def shifted(self, k: int, j: int, delta: int) -> "GZPattern":
        """Copy with entry j (0-based) of row k changed by delta."""
        rows = [list(r) for r in self.rows]
        rows[self.n - k][j] += delta
        return GZPattern(tuple(tuple(r) for r in rows))


@dataclass(frozen=True)
class RhoShift:
    """Half-sum of positive roots, its integral part, and the triangular shift"""
    rho: Tuple[Fraction, ...]
    rho_bar: Tuple[int, ...]
    rho_tilde: Tuple[Tuple[Fraction, ...], ...]


@dataclass(frozen=True)
class GZPolytope:
    """
    Interlacing inequalities with fixed top row.

    Each inequality ``(upper, lower)`` reads ``x[upper] >= x[lower]`` on the
    full triangular array, positions written as (row length k, index j).
    """
    lam: HighestWeight
    dimension: int
    inequalities: Tuple[Tuple[Tuple[int, int], Tuple[int, int]], ...]


class GeneratorKind(str, Enum):
    """Kinds of Lie algebra generators E_ab"""
    DIAG = "diag"
    RAISE = "raise"
    LOWER = "lower"
    GENERAL = "general"


class LieGenerator(BaseModel):
    """Generator E_ab of gl(n), 1-based indices"""
    model_config = ConfigDict(frozen=True)

    kind: GeneratorKind
    a: int = Field(..., ge=1)
    b: int = Field(..., ge=1)

    @model_validator(mode="after")
    def validate_kind(self):
        """Indices must match the declared kind"""
        if self.kind == GeneratorKind.DIAG and self.a != self.b:
            raise ValueError("Diagonal generator needs a == b")
        if self.kind == GeneratorKind.RAISE and self.b != self.a + 1:
            raise ValueError("Raising generator needs b == a + 1")
        if self.kind == GeneratorKind.LOWER and self.a != self.b + 1:
            raise ValueError("Lowering generator needs a == b + 1")
        return self

    @classmethod
    def E(cls, a: int, b: int) -> "LieGenerator":
        if a == b:
            kind = GeneratorKind.DIAG
        elif b == a + 1:
            kind = GeneratorKind.RAISE
        elif a == b + 1:
            kind = GeneratorKind.LOWER
        else:
            kind = GeneratorKind.GENERAL
        return cls(kind=kind, a=a, b=b)


@dataclass
class RepMatrix:
    """Matrix of a generator or group element in an ordered GZ basis"""
    basis: List[GZPattern]
    entries: np.ndarray
    exact: Optional[Any] = None

    @property
    def dim(self) -> int:
        return len(self.basis)


@dataclass
class HermitianPoint:
    """Point of a coadjoint orbit in the Hermitian-matrix model"""
    alpha: np.ndarray
    lam: Optional[Tuple[float, ...]] = None


@dataclass
class MinorSpectrum:
    """Sorted eigenvalues of the leading minors, top row (full spectrum) first"""
    rows: List[np.ndarray]

    def coordinates(self) -> np.ndarray:
        return np.concatenate(self.rows[1:]) if len(self.rows) > 1 else np.zeros(0)


@dataclass
class ToricFiberPoint:
    """Point of a torus fibre of CP^{n-1}"""
    v: np.ndarray
    theta: np.ndarray
    z: np.ndarray


@dataclass
class IntersectionPoint:
    """A located point of g.Lambda_v meet Lambda_w"""
    point: Union[ToricFiberPoint, HermitianPoint]
    residual: float
    jac_det: float
    component_id: int = 0
    min_distance: float = float("inf")
    component_dim: int = 0
    preimage: Optional[Union[ToricFiberPoint, HermitianPoint]] = None

    @property
    def transversal(self) -> bool:
        return self.component_dim == 0 and abs(self.jac_det) > 0


@dataclass
class IntersectionResult:
    """Outcome of a multistart intersection search"""
    points: List[IntersectionPoint]
    certificate: str
    residual_floor: float = 0.0
    starts: int = 0
    failed_starts: int = 0

    @property
    def clean(self) -> bool:
        return any(p.component_dim > 0 for p in self.points)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


class SolverConfig(BaseModel):
    """Multistart Newton settings"""
    starts: int = Field(default=64, ge=1)
    newton_tol: float = Field(default=1e-11, gt=0)
    max_iter: int = Field(default=60, ge=1)
    dedup_radius: float = Field(default=1e-6, gt=0)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def validate_radius(self):
        """Dedup radius must dominate the Newton tolerance"""
        if self.dedup_radius <= 10 * self.newton_tol:
            raise ValueError("dedup_radius must exceed 10 * newton_tol")
        return self


@dataclass
class AreaPath:
    """
    Closed loop through two intersection points.

    ``leg1`` runs inside g.Lambda_v from ``start`` to ``end``; ``leg2`` runs
    inside Lambda_w from ``end`` back to ``start``. Nodes are unit vectors in
    toric mode and unitary frames in flag mode.
    """
    leg1: List[np.ndarray]
    leg2: List[np.ndarray]
    mode: str = "toric"
    weights: Optional[Tuple[float, ...]] = None
    refine: Optional[Callable[[int], "AreaPath"]] = None


class MaslovMode(str, Enum):
    CALIBRATED = "calibrated"
    PREDICTED = "predicted"


@dataclass
class ComponentPrediction:
    amplitude: float
    eta: float
    maslov: int = 0
    jac_det: float = 0.0


@dataclass
class Prediction:
    """Leading-order asymptotic prediction at one p"""
    p: int
    k: float
    components: List[ComponentPrediction]
    total: complex
    power: float
    maslov_mode: MaslovMode = MaslovMode.CALIBRATED
    decay: bool = False
    orientation: int = 1

    @property
    def envelope(self) -> Tuple[float, float]:
        amps = sorted((c.amplitude for c in self.components), reverse=True)
        if not amps:
            return 0.0, 0.0
        return max(amps[0] - sum(amps[1:]), 0.0), sum(amps)


@dataclass
class BSFlatSection:
    """Flat unit section of L^p over a torus fibre, in angle coordinates"""
    v: Tuple[Fraction, ...]
    p: int
    bohr_sommerfeld: bool
    holonomy: Tuple[float, ...]

    def value(self, theta: np.ndarray) -> complex:
        return complex(np.exp(2j * np.pi * self.p * float(np.dot([float(x) for x in self.v], theta))))


@dataclass
class IsotropicStateCoeffs:
    """Isotropic state of a toric fibre in the normalized monomial basis"""
    p: int
    v: Tuple[Fraction, ...]
    k_twist: int
    coefficients: Dict[Tuple[int, ...], complex]
    bohr_sommerfeld: bool
    resolution: int
    leakage: float = 0.0
    norm_squared: float = 0.0


@dataclass
class ExactElement:
    """Matrix element in arbitrary precision with its provenance"""
    value: Any
    provenance: str

    def __complex__(self) -> complex:
        return complex(self.value)


class SelectionRule(str, Enum):
    FIXED = "fixed"
    NEAREST = "nearest"


class ExperimentMode(str, Enum):
    TORIC = "toric"
    FLAG = "flag"
    WIGNER = "wigner"


class ExperimentConfig(BaseModel):
    """Parsed comparison experiment"""
    mode: ExperimentMode
    n: int = Field(..., ge=2)
    lam: Tuple[int, ...] = ()
    g_source: str = Field(default="rotation", description="rotation | haar | file")
    beta: float = 0.0
    g_seed: int = 0
    g_file: Optional[str] = None
    v: Tuple[Fraction, ...]
    w: Tuple[Fraction, ...]
    selection: SelectionRule = SelectionRule.NEAREST
    p_list: Tuple[int, ...]
    maslov: MaslovMode = MaslovMode.CALIBRATED
    calibration_p: int = 40
    window: int = 8
    solver_starts: int = 64
    seed: int = 0
    csv_path: Optional[str] = None
    json_path: Optional[str] = None
    dat_path: Optional[str] = None

    @field_validator("p_list")
    @classmethod
    def validate_p_list(cls, v):
        """p values must be positive and are kept sorted"""
        if not v or any(p <= 0 for p in v):
            raise ValueError("p_list must hold positive integers")
        return tuple(sorted(set(v)))

    @model_validator(mode="after")
    def validate_shapes(self):
        """Check weights and levels against n"""
        if self.mode == ExperimentMode.FLAG:
            if len(self.lam) != self.n:
                raise ValueError("flag mode needs a highest weight of length n")
            HighestWeight(entries=self.lam)
            size = self.n * (self.n - 1) // 2
        else:
            size = self.n - 1
        if len(self.v) != size or len(self.w) != size:
            raise ValueError(f"v and w must have {size} entries")
        if self.g_source == "file" and not self.g_file:
            raise ValueError("g_source=file needs g_file")
        return self


@dataclass
class ComparisonRecord:
    """One row of a convergence experiment"""
    p: int
    k: float
    exact: complex
    predicted: complex
    residual: float
    phase_alignment: complex
    v_p: Tuple[str, ...] = ()
    w_p: Tuple[str, ...] = ()
    skipped: bool = False
    reason: str = ""
    cache_hit: bool = False
    components: List[ComponentPrediction] = field(default_factory=list)
    power: float = 0.0

    @property
    def abs_exact(self) -> float:
        return abs(self.exact)

    @property
    def abs_predicted(self) -> float:
        return abs(self.predicted)

    @property
    def abs_scaled(self) -> float:
        return float(self.k ** self.power * abs(self.exact)) if self.k else abs(self.exact)

    def to_row(self) -> Dict[str, Any]:
        return {
            "p": self.p,
            "k": self.k,
            "exact_re": self.exact.real,
            "exact_im": self.exact.imag,
            "predicted_re": self.predicted.real,
            "predicted_im": self.predicted.imag,
            "abs_exact": self.abs_exact,
            "abs_scaled": self.abs_scaled,
            "abs_predicted": self.abs_predicted,
            "residual": self.residual,
            "phase_re": self.phase_alignment.real,
            "phase_im": self.phase_alignment.imag,
            "v_p": " ".join(self.v_p),
            "w_p": " ".join(self.w_p),
            "skipped": self.skipped,
            "reason": self.reason,
            "cache_hit": self.cache_hit,
        }


@dataclass
class ReportSummary:
    """Aggregate verdicts of a comparison run"""
    slope: Optional[float]
    slope_stderr: Optional[float]
    slope_ci: Tuple[Optional[float], Optional[float]]
    envelope_ratio: Optional[float]
    decay_monotone: Optional[bool]
    decay_final: Optional[float]
    maslov: List[int]
    orientation: int
    runtime_seconds: float
    cache_hits: int
    records: int
    skipped: int
    passed: Optional[bool] = None

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)
