"""
Exact-versus-asymptotic comparison runs.

A run sweeps p, picks the quantized levels nearest the requested ones,
computes the exact matrix element (cached), solves the intersection
geometry, and records the residual after phase alignment. The
ConvergenceAnalyzer turns the records into slope, envelope, RMS and decay
verdicts.
"""

import logging
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from scipy.stats import unitary_group

from src.config import get_settings
from src.constants import prefactor_power
from src.models.models import (
    ComparisonRecord,
    ConfigError,
    ExperimentConfig,
    ExperimentMode,
    GZPattern,
    GZSCError,
    IntersectionResult,
    MaslovMode,
    Prediction,
    ReportSummary,
    SelectionRule,
    SolverConfig,
)
from src.services.cache import ResultCache, cache_key
from src.services.gz_combinatorics import rho_shift
from src.services.gz_representation import DimensionGuardError, LogarithmError, group_matrix_element
from src.services.intersection_solver import flag_intersections, toric_intersections
from src.services.monomial_rep import exact_matrix_element, rotation_matrix, spin_labels, wigner_d
from src.services.semiclassical_predictor import (
    PredictionRefusedError,
    QuadratureError,
    calibrate_maslov,
    flag_levels,
    phase_alignment,
    predict_flag,
    predict_toric,
    semiclassical_level,
)

logger = logging.getLogger(__name__)

SLOPE_WINDOW = (-1.3, -0.7)
DECAY_START = 30
DECAY_FLOOR = 1e-6


class LevelSelectionError(ConfigError):
    """Custom exception for targets with no admissible lattice point"""
    pass


# ---------------------------------------------------------------------------
# Inputs


def parse_fraction_list(text: str) -> Tuple[Fraction, ...]:
    """Parse "1/2 1/3" or "0.5,0.25" into Fractions."""
    tokens = [t for t in re.split(r"[\s,]+", text.strip()) if t]
    try:
        return tuple(Fraction(t) for t in tokens)
    except (ValueError, ZeroDivisionError) as e:
        raise ConfigError(f"Cannot parse rational list {text!r}: {e}") from e


def parse_p_list(text: str) -> Tuple[int, ...]:
    """Comma list ("20,40,80") or range "a:b:step" (inclusive of b)."""
    text = text.strip()
    try:
        if ":" in text:
            parts = [int(x) for x in text.split(":")]
            start, stop = parts[0], parts[1]
            step = parts[2] if len(parts) > 2 else 1
            return tuple(range(start, stop + 1, step))
        return tuple(int(x) for x in re.split(r"[\s,]+", text) if x)
    except ValueError as e:
        raise ConfigError(f"Cannot parse p list {text!r}") from e


def load_matrix(path: str) -> np.ndarray:
    """
    Read a complex matrix, one row per line as re,im pairs.

    Blank lines and lines starting with '#' are ignored.
    """
    rows = []
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ConfigError(f"Cannot read matrix file {path}: {e}") from e
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        values = [float(t) for t in re.split(r"[\s,]+", line) if t]
        if len(values) % 2:
            raise ConfigError(f"Odd number of values in matrix row: {line}")
        rows.append([complex(a, b) for a, b in zip(values[::2], values[1::2])])
    g = np.array(rows, dtype=complex)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise ConfigError(f"Matrix in {path} is not square")
    return g


def parse_config_file(path: str) -> ExperimentConfig:
    """
    Read ``key = value`` lines into an ExperimentConfig.

    Keys: mode, n, lambda, g (rotation|haar|file), beta, seed, g_file, v, w,
    selection, p, maslov, calibration_p, window, starts, csv, json, dat.
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    raw: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        raw[key.lower()] = value
    return config_from_mapping(raw)


def config_from_mapping(raw: Dict[str, str]) -> ExperimentConfig:
    """Build an ExperimentConfig from string options (config file or CLI)."""
    fields = {
        "mode": raw.get("mode", "toric"),
        "n": int(raw.get("n", 2)),
        "g_source": raw.get("g", "rotation"),
        "beta": float(raw.get("beta", 0.0)),
        "g_seed": int(raw.get("seed", 0)),
        "seed": int(raw.get("seed", 0)),
        "g_file": raw.get("g_file"),
        "v": parse_fraction_list(raw.get("v", "")),
        "w": parse_fraction_list(raw.get("w", "")),
        "selection": raw.get("selection", "nearest"),
        "p_list": parse_p_list(raw.get("p", "40")),
        "maslov": raw.get("maslov", "calibrated"),
        "calibration_p": int(raw.get("calibration_p", 40)),
        "window": int(raw.get("window", 8)),
        "solver_starts": int(raw.get("starts", 64)),
        "csv_path": raw.get("csv"),
        "json_path": raw.get("json"),
        "dat_path": raw.get("dat"),
    }
    if "lambda" in raw:
        fields["lam"] = tuple(int(x) for x in re.split(r"[\s,]+", raw["lambda"].strip()) if x)
    try:
        return ExperimentConfig(**fields)
    except ValueError as e:
        raise ConfigError(str(e)) from e


def resolve_group_element(config: ExperimentConfig) -> np.ndarray:
    """The unitary g of a run: named rotation, seeded Haar sample, or file."""
    n = config.n
    if config.g_source == "rotation":
        g = np.eye(n, dtype=complex)
        g[:2, :2] = rotation_matrix(config.beta)
        return g
    if config.g_source == "haar":
        return unitary_group.rvs(n, random_state=config.g_seed)
    if config.g_source == "file":
        g = load_matrix(config.g_file)
        if g.shape != (n, n):
            raise ConfigError(f"Matrix in {config.g_file} is not {n}x{n}")
        return g
    raise ConfigError(f"Unknown g source {config.g_source!r}")


# ---------------------------------------------------------------------------
# Level selection


def _nearest_integer(x: Fraction) -> int:
    """Nearest integer, halves rounded down."""
    lower = x.numerator // x.denominator
    return lower if x - lower <= Fraction(1, 2) else lower + 1


def toric_degree(n: int, p: int) -> int:
    """Monomial degree swept at parameter p: p - n/2 for even n, p for odd n."""
    return p - n // 2 if n % 2 == 0 else p


@dataclass
class ToricLevel:
    degree: int
    k: Fraction
    nu: Tuple[int, ...]
    levels: Tuple[Fraction, ...]


def select_toric_level(n: int, p: int, target: Sequence[Fraction], rule: SelectionRule = SelectionRule.NEAREST) -> ToricLevel:
    """
    Monomial of degree toric_degree(n, p) whose shifted level is nearest target.

    Raises:
        LevelSelectionError: if no monomial fits, or the fixed rule finds the
            target off the lattice
    """
    d = toric_degree(n, p)
    if d < 0:
        raise LevelSelectionError(f"p={p} too small for n={n}")
    k = Fraction(d) + Fraction(n, 2)
    raw = [Fraction(t) * k - Fraction(1, 2) for t in target]
    if rule == SelectionRule.FIXED:
        if any(x.denominator != 1 or x < 0 for x in raw):
            raise LevelSelectionError(f"Target {tuple(map(str, target))} is not a level at p={p}")
        suffix = [int(x) for x in raw]
    else:
        suffix = [max(0, _nearest_integer(x)) for x in raw]
    while sum(suffix) > d:
        excess = [Fraction(s) - x for s, x in zip(suffix, raw)]
        j = max(range(len(suffix)), key=lambda i: (excess[i], -i))
        suffix[j] -= 1
    nu = (d - sum(suffix), *suffix)
    k_, levels = semiclassical_level(n, d, suffix)
    return ToricLevel(degree=d, k=k_, nu=tuple(nu), levels=levels)


def select_flag_level(lam: Sequence[int], p: int, target: Sequence[Fraction], rule: SelectionRule = SelectionRule.NEAREST) -> GZPattern:
    """
    Pattern of V(p lam + rho_bar) whose level (nu + rho)/p is nearest target.

    Rounds each entry, then clamps row by row so the pattern interlaces.
    """
    n = len(lam)
    shift = rho_shift(n)
    top = tuple(p * a + b for a, b in zip(lam, shift.rho_bar))
    rows = [top]
    start = 0
    for k in range(n - 1, 0, -1):
        upper = rows[-1]
        rho_k = shift.rho_tilde[n - k]
        row = []
        for j in range(k):
            x = Fraction(target[start + j]) * p - rho_k[j]
            if rule == SelectionRule.FIXED and x.denominator != 1:
                raise LevelSelectionError(f"Target is not a level at p={p}")
            value = _nearest_integer(x)
            row.append(min(upper[j], max(upper[j + 1], value)))
        rows.append(tuple(row))
        start += k
    return GZPattern(tuple(rows))


# ---------------------------------------------------------------------------
# One p


@dataclass
class Sample:
    """Everything computed for one p before prediction."""
    p: int
    k: float
    power: float
    source: Tuple
    target: Tuple
    v: Tuple[Fraction, ...]
    w: Tuple[Fraction, ...]
    orbit: Optional[Tuple[Fraction, ...]] = None
    exact: complex = 0j
    cache_hit: bool = False
    skipped: bool = False
    reason: str = ""


class ComparisonRun:
    """
    Drives one experiment from config to records.
    """

    def __init__(self, config: ExperimentConfig, cache: Optional[ResultCache] = None):
        self.config = config
        self.g = resolve_group_element(config)
        self.cache = cache
        self.solver = SolverConfig(starts=config.solver_starts, seed=config.seed)
        self.maslov: List[int] = []
        self.orientation = -1
        self._reference_points = None
        self._reference_branches = None

    # --- exact side ---

    def _prepare(self, p: int) -> Sample:
        cfg = self.config
        if cfg.mode == ExperimentMode.FLAG:
            src = select_flag_level(cfg.lam, p, cfg.v, cfg.selection)
            dst = select_flag_level(cfg.lam, p, cfg.w, cfg.selection)
            orbit, v = flag_levels(cfg.lam, p, src)
            _, w = flag_levels(cfg.lam, p, dst)
            return Sample(p=p, k=float(p), power=prefactor_power("flag", cfg.lam),
                          source=src.rows, target=dst.rows,
                          v=v, w=w, orbit=orbit)
        src = select_toric_level(cfg.n, p, cfg.v, cfg.selection)
        dst = select_toric_level(cfg.n, p, cfg.w, cfg.selection)
        power = prefactor_power(cfg.mode.value, (1,) + (0,) * (cfg.n - 1))
        return Sample(p=p, k=float(src.k), power=power, source=src.nu, target=dst.nu,
                      v=src.levels, w=dst.levels)

    def _exact(self, sample: Sample) -> None:
        cfg = self.config
        if cfg.mode == ExperimentMode.FLAG:
            weight = sample.source[0]
            key = cache_key(cfg.mode.value, cfg.n, weight, self.g, sample.source, sample.target)
        else:
            weight = (sum(sample.source),) + (0,) * (cfg.n - 1)
            key = cache_key(cfg.mode.value, cfg.n, weight, self.g, sample.source, sample.target)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                sample.exact, sample.cache_hit = hit, True
                return
        if cfg.mode == ExperimentMode.FLAG:
            value = group_matrix_element(weight, self.g, GZPattern(sample.target), GZPattern(sample.source))
        elif cfg.mode == ExperimentMode.WIGNER and cfg.g_source == "rotation" and cfg.n == 2:
            j, m_src = spin_labels(sample.source)
            _, m_dst = spin_labels(sample.target)
            value = complex(wigner_d(j, m_dst, m_src, cfg.beta))
        else:
            value = complex(exact_matrix_element(sum(sample.source), self.g, sample.source, sample.target))
        sample.exact = value
        if self.cache is not None:
            self.cache.put(key, value)

    # --- geometric side ---

    def _intersections(self, sample: Sample) -> IntersectionResult:
        if self.config.mode == ExperimentMode.FLAG:
            return flag_intersections([float(x) for x in sample.orbit], self.g, sample.v, sample.w, self.solver)
        return toric_intersections(self.g, sample.v, sample.w, self.solver)

    def _distance(self, a, b) -> float:
        if self.config.mode == ExperimentMode.FLAG:
            return float(np.linalg.norm(a.point.alpha - b.point.alpha))
        za, zb = a.point.z, b.point.z
        return float(np.linalg.norm(np.outer(za, za.conj()) - np.outer(zb, zb.conj())))

    def _match(self, result: IntersectionResult) -> IntersectionResult:
        """Order points like the calibration points, nearest first."""
        ref = self._reference_points
        if not ref or len(ref) != len(result.points):
            return result
        remaining = list(result.points)
        ordered = []
        for r in ref:
            best = min(remaining, key=lambda q: self._distance(q, r))
            remaining.remove(best)
            ordered.append(best)
        result.points = ordered
        return result

    def _predict(self, sample: Sample, result: IntersectionResult, maslov, references):
        if self.config.mode == ExperimentMode.FLAG:
            return predict_flag(sample.p, self.g, [float(x) for x in sample.orbit], result,
                                maslov=maslov, orientation=self.orientation, references=references)
        return predict_toric(sample.p, sample.k, self.g, result, maslov=maslov,
                             orientation=self.orientation, references=references)

    def calibrate(self, samples: Sequence[Sample]) -> None:
        """Fit Maslov indices and orientation on the calibration samples."""
        fits = []
        for sample in samples:
            result = self._intersections(sample)
            if self._reference_points is None:
                self._reference_points = list(result.points)
            else:
                result = self._match(result)
            prediction, refs = self._predict(sample, result, [0] * len(result.points),
                                             self._reference_branches)
            if self._reference_branches is None:
                self._reference_branches = refs
            fits.append((sample.k, sample.k ** sample.power * sample.exact, prediction.components))
        if self.config.maslov == MaslovMode.CALIBRATED:
            self.maslov, self.orientation = calibrate_maslov(fits)

    def evaluate(self, sample: Sample) -> ComparisonRecord:
        """Prediction and residual at one p."""
        record = ComparisonRecord(p=sample.p, k=sample.k, exact=sample.exact, predicted=0j, residual=float("nan"),
                                  phase_alignment=1 + 0j, v_p=tuple(map(str, sample.v)),
                                  w_p=tuple(map(str, sample.w)), cache_hit=sample.cache_hit,
                                  power=sample.power)
        if sample.skipped:
            record.skipped, record.reason = True, sample.reason
            return record
        try:
            result = self._match(self._intersections(sample))
            maslov = self.maslov if self.config.maslov == MaslovMode.CALIBRATED else None
            if maslov is not None and len(maslov) != len(result.points):
                raise PredictionRefusedError(
                    f"{len(result.points)} intersection points at p={sample.p}, calibrated for {len(maslov)}"
                )
            prediction, _ = self._predict(sample, result, maslov, self._reference_branches)
        except (PredictionRefusedError, QuadratureError) as e:
            logger.warning(f"p={sample.p}: {e}")
            record.skipped, record.reason = True, str(e)
            return record
        scaled = sample.k ** sample.power * sample.exact
        z, residual = phase_alignment(scaled, prediction.total)
        record.predicted = prediction.total
        record.phase_alignment = z
        record.residual = residual
        record.components = prediction.components
        return record

    def predictions(self) -> List[Tuple[Sample, Optional[Prediction], str]]:
        """
        Predictions over the p-list without exact values at those p.

        Calibrated indices still need the exact elements at calibration_p and
        calibration_p + 1. A p that cannot be predicted comes back with a
        reason instead of a prediction.
        """
        cfg = self.config
        if cfg.maslov == MaslovMode.CALIBRATED:
            calibration = []
            for p in (cfg.calibration_p, cfg.calibration_p + 1):
                sample = self._prepare(p)
                self._exact(sample)
                calibration.append(sample)
            self.calibrate(calibration)
        out = []
        for p in cfg.p_list:
            sample = self._prepare(p)
            try:
                result = self._match(self._intersections(sample))
                maslov = self.maslov if cfg.maslov == MaslovMode.CALIBRATED else None
                if maslov is not None and len(maslov) != len(result.points):
                    raise PredictionRefusedError(
                        f"{len(result.points)} intersection points at p={p}, calibrated for {len(maslov)}"
                    )
                prediction, _ = self._predict(sample, result, maslov, self._reference_branches)
            except (PredictionRefusedError, QuadratureError) as e:
                logger.warning(f"p={p}: {e}")
                out.append((sample, None, str(e)))
                continue
            out.append((sample, prediction, ""))
        return out

    def run(self) -> Tuple[List[ComparisonRecord], "ConvergenceAnalyzer"]:
        cfg = self.config
        started = time.perf_counter()
        samples: List[Sample] = []
        # exact values stay on this thread: mpmath precision is process-global
        for p in cfg.p_list:
            sample = None
            try:
                sample = self._prepare(p)
                self._exact(sample)
            except (ConfigError, DimensionGuardError, LogarithmError) as e:
                if sample is None:
                    sample = Sample(p=p, k=float(p), power=0.0, source=(), target=(), v=(), w=())
                sample.skipped, sample.reason = True, str(e)
                logger.warning(f"Skipping p={p}: {e}")
            samples.append(sample)

        calibration = []
        for p in (cfg.calibration_p, cfg.calibration_p + 1):
            existing = next((s for s in samples if s.p == p and not s.skipped), None)
            if existing is None:
                try:
                    existing = self._prepare(p)
                    self._exact(existing)
                except GZSCError as e:
                    logger.error(f"Calibration at p={p} failed: {e}")
                    raise
            calibration.append(existing)
        try:
            self.calibrate(calibration)
        except (PredictionRefusedError, QuadratureError) as e:
            # records whose point count differs from the (empty) fit are refused in evaluate
            logger.warning(f"Calibration refused: {e}")

        with ThreadPoolExecutor(max_workers=get_settings().max_workers) as pool:
            records = list(pool.map(self.evaluate, samples))
        runtime = time.perf_counter() - started
        logger.info(f"Comparison finished: {len(records)} records in {runtime:.1f}s")
        analyzer = ConvergenceAnalyzer(records, maslov=self.maslov, orientation=self.orientation,
                                       runtime=runtime, window=cfg.window)
        return records, analyzer


def run_comparison(config: ExperimentConfig, cache: Optional[ResultCache] = None) -> Tuple[List[ComparisonRecord], ReportSummary]:
    """Run an experiment and return its records with the summary."""
    records, analyzer = ComparisonRun(config, cache).run()
    return records, analyzer.summary()


# ---------------------------------------------------------------------------
# Analysis


class ConvergenceAnalyzer:
    """
    Fits and verdicts over the records of a comparison run.
    """

    def __init__(self, records: List[ComparisonRecord], maslov: Sequence[int] = (), orientation: int = 1,
                 runtime: float = 0.0, window: int = 8):
        self.records = records
        self.maslov = list(maslov)
        self.orientation = orientation
        self.runtime = runtime
        self.window = window
        self.df = self._prepare_data(records)

    def _prepare_data(self, records: List[ComparisonRecord]) -> pd.DataFrame:
        """Records as a DataFrame indexed by p, with scaled and envelope columns."""
        if not records:
            return pd.DataFrame(columns=["p", "abs_exact", "residual", "skipped"]).set_index("p")
        rows = []
        for r in records:
            row = r.to_row()
            row["incoherent"] = float(sum(c.amplitude ** 2 for c in r.components))
            row["envelope_max"] = float(sum(c.amplitude for c in r.components))
            row["components"] = len(r.components)
            rows.append(row)
        df = pd.DataFrame(rows).set_index("p").sort_index()
        return df

    def _active(self) -> pd.DataFrame:
        return self.df[~self.df["skipped"]]

    def fit_slope(self, min_p: int = None) -> Tuple[Optional[float], Optional[float], Tuple[Optional[float], Optional[float]]]:
        """
        Log-log slope of residual against p with a 95% confidence interval.
        """
        df = self._active()
        if min_p is not None:
            df = df[df.index >= min_p]
        df = df[(df["residual"] > 0) & df["residual"].notna()]
        if len(df) < 3:
            return None, None, (None, None)
        fit = stats.linregress(np.log(df.index.astype(float)), np.log(df["residual"].astype(float)))
        half = stats.t.ppf(0.975, len(df) - 2) * fit.stderr
        return float(fit.slope), float(fit.stderr), (float(fit.slope - half), float(fit.slope + half))

    def envelope_ratio(self, min_p: int = 100) -> Optional[float]:
        """Largest observed |scaled exact| over the predicted maximum a_0 + a_1 + ..."""
        df = self._active()
        df = df[(df.index >= min_p) & (df["envelope_max"] > 0)]
        if df.empty:
            return None
        return float(df["abs_scaled"].max() / df["envelope_max"].max())

    def window_rms(self, width: int = None) -> pd.DataFrame:
        """
        Rolling mean of |scaled exact|^2 against the incoherent sum of a_q^2.
        """
        width = width or self.window
        df = self._active()
        out = pd.DataFrame({
            "observed": (df["abs_scaled"] ** 2).rolling(width).mean(),
            "predicted": df["incoherent"].rolling(width).mean(),
        })
        out["ratio"] = out["observed"] / out["predicted"]
        return out.dropna()

    def decay_check(self, start: int = DECAY_START, floor: float = DECAY_FLOOR) -> Tuple[Optional[bool], Optional[float]]:
        """
        For empty intersections: |exact| * p^3 decreases beyond ``start`` and
        ends below ``floor``.
        """
        df = self._active()
        df = df[df.index > start]
        if df.empty:
            return None, None
        series = df["abs_exact"] * df.index.to_series().astype(float) ** 3
        diffs = series.diff().dropna()
        monotone = bool((diffs <= 1e-300).all())
        return monotone, float(series.iloc[-1])

    def summary(self, cache_hits: int = None) -> ReportSummary:
        slope, stderr, ci = self.fit_slope()
        decay = all(r.components == [] for r in self.records if not r.skipped)
        monotone, final = self.decay_check() if decay else (None, None)
        if decay:
            passed = bool(monotone) and final is not None and final < DECAY_FLOOR
        elif ci[0] is not None:
            passed = SLOPE_WINDOW[0] <= ci[0] and ci[1] <= SLOPE_WINDOW[1]
        else:
            passed = None
        hits = cache_hits if cache_hits is not None else sum(1 for r in self.records if r.cache_hit)
        return ReportSummary(
            slope=slope,
            slope_stderr=stderr,
            slope_ci=ci,
            envelope_ratio=self.envelope_ratio(),
            decay_monotone=monotone,
            decay_final=final,
            maslov=self.maslov,
            orientation=self.orientation,
            runtime_seconds=self.runtime,
            cache_hits=hits,
            records=len(self.records),
            skipped=sum(1 for r in self.records if r.skipped),
            passed=passed,
        )

    def to_csv(self, path: str) -> None:
        self.df.reset_index().to_csv(path, index=False)

    def to_dat(self, path: str) -> None:
        """Whitespace columns for plotting: p abs_scaled abs_predicted residual."""
        df = self._active().reset_index()[["p", "abs_scaled", "abs_predicted", "residual"]]
        df.to_csv(path, sep=" ", index=False, header=False, float_format="%.12e")
