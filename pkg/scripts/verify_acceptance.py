#!/usr/bin/env python3
"""
Verification script for the exact-versus-asymptotic sweeps

This script verifies:
1. Pattern counts against the Weyl dimension formula
2. Group matrices: unitarity, homomorphism, monomial and Wigner agreement
3. Harish-Chandra eigenvalues of the Gelfand invariants and their scaling
4. Cauchy interlacing of the GZ map on random Hermitian matrices
5. Isotropic states: leakage, reproducing kernel, norm asymptotics
6. The O(1/p) remainder of the Wigner d asymptotics
7. The O(1/p) remainder on CP^2 for a random unitary
8. Decay of matrix elements between disjoint fibres
9. Window-RMS envelope of flag matrix elements for lambda = (2,1,0)
10. Barycenter fibres meeting their translates under random unitaries
"""

import itertools
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.stats import linregress, unitary_group

# Add repo root to path for imports
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from src.config import configure_logging, get_settings
from src.models.models import SolverConfig
from src.services.bergman_states import _monomial, isotropic_state, reproducing_check, state_norm_asymptotics
from src.services.coadjoint_geometry import gz_map
from src.services.gz_combinatorics import enumerate_patterns, pattern_weight, weyl_dimension
from src.services.gz_representation import (
    LogarithmError,
    gelfand_invariant_matrix,
    group_matrix,
    harish_chandra_check,
    harish_chandra_scaling,
    offdiagonal_mass,
)
from src.services.harness import SLOPE_WINDOW, ComparisonRun, config_from_mapping
from src.services.intersection_solver import toric_intersections
from src.services.monomial_rep import element_matrix, rotation_matrix, spin_labels, wigner_d


def _aligned_deviation(gz: np.ndarray, mono: np.ndarray) -> float:
    """Largest entry of gz - Phi mono Phi^H after fitting one phase per basis vector."""
    ratio = gz[:, 0] / mono[:, 0]
    phases = ratio / np.abs(ratio)
    return float(np.max(np.abs(phases[:, None] * mono * phases.conj()[None, :] - gz)))


class AcceptanceVerification:
    """Verification class for the headline sweeps"""

    def __init__(self, quick: bool = False):
        self.quick = quick
        self.verification_results = []

    def run_verification(self) -> bool:
        """Run all checks and report"""
        print("🚀 Starting acceptance verification")
        print("=" * 60)

        for step in (
            self.verify_pattern_counts,
            self.verify_group_matrices,
            self.verify_harish_chandra,
            self.verify_interlacing,
            self.verify_isotropic_states,
            self.verify_wigner_remainder,
            self.verify_toric_remainder,
            self.verify_decay,
            self.verify_flag_envelope,
            self.verify_barycenter_trials,
        ):
            try:
                step()
            except Exception as e:
                self._record(step.__name__, False, f"raised {type(e).__name__}: {e}")

        self.print_verification_results()
        return all(result["success"] for result in self.verification_results)

    def _record(self, name: str, success: bool, details: str) -> None:
        self.verification_results.append({"step": name, "success": success, "details": details})
        print(f"{'✅' if success else '❌'} {name}: {details}")

    def verify_pattern_counts(self):
        """#patterns equals the Weyl dimension for n <= 5, entries in [0, 4]"""
        print("\n📋 Step 1: Pattern counts")
        cases, mismatches = 0, []
        for n in range(1, 6 if not self.quick else 4):
            for lam in itertools.combinations_with_replacement(range(4, -1, -1), n):
                cases += 1
                if len(enumerate_patterns(lam)) != weyl_dimension(lam):
                    mismatches.append(lam)
        self._record("pattern_counts", not mismatches, f"{cases} weights, {len(mismatches)} mismatches")

    def verify_group_matrices(self):
        """Unitarity, homomorphism, monomial agreement and the Wigner oracle"""
        print("\n📋 Step 2: Group matrices")
        weights = [(2, 1, 0), (3, 1, 0), (2, 1, 1, 0), (3, 2, 1, 0)]
        if not self.quick:
            weights += [(4, 2, 0), (3, 2, 1, 0, 0), (2, 2, 1, 0)]
        unitarity, homomorphism, refused = 0.0, 0.0, 0
        for seed, lam in enumerate(weights):
            n = len(lam)
            g1, g2 = unitary_group.rvs(n, random_state=2 * seed), unitary_group.rvs(n, random_state=2 * seed + 1)
            try:
                r1, r2, r12 = group_matrix(lam, g1), group_matrix(lam, g2), group_matrix(lam, g1 @ g2)
            except LogarithmError:
                refused += 1
                continue
            eye = np.eye(r1.dim)
            unitarity = max(unitarity, float(np.max(np.abs(r1.entries.conj().T @ r1.entries - eye))))
            homomorphism = max(homomorphism, float(np.max(np.abs(r12.entries - r1.entries @ r2.entries))))
        self._record("group_matrix unitarity", unitarity < 1e-10, f"max deviation {unitarity:.2e}")
        self._record("group_matrix homomorphism", homomorphism < 1e-8,
                     f"max deviation {homomorphism:.2e}, {refused} logarithms refused")

        worst = 0.0
        for n in (2, 3):
            g = unitary_group.rvs(n, random_state=40 + n)
            for p in range(1, 7 if self.quick else 13):
                basis, mono = element_matrix(p, g)
                try:
                    rep = group_matrix((p,) + (0,) * (n - 1), g)
                except LogarithmError:
                    continue
                order = [basis.index(pattern_weight(pt)) for pt in rep.basis]
                worst = max(worst, _aligned_deviation(rep.entries, mono[np.ix_(order, order)]))
        self._record("monomial vs GZ", worst < 1e-9, f"max deviation {worst:.2e} after phase alignment")

        beta = 1.1
        worst = 0.0
        for p in range(1, 21 if self.quick else 41):
            basis, r = element_matrix(p, rotation_matrix(beta))
            for i, mu in enumerate(basis):
                for c, nu in enumerate(basis):
                    j, m = spin_labels(mu)
                    _, mp = spin_labels(nu)
                    worst = max(worst, abs(r[i, c] - float(wigner_d(j, m, mp, beta))))
        self._record("wigner oracle", worst < 1e-10, f"max deviation {worst:.2e} for 2j <= {p}")

    def verify_harish_chandra(self):
        """Gelfand invariants are diagonal with Harish-Chandra eigenvalues"""
        print("\n📋 Step 3: Harish-Chandra eigenvalues")
        mass, mismatches, cases = 0.0, 0, 0
        for lam in ((2, 1, 0), (3, 1, 0)):
            for k in (1, 2, 3):
                for j in range(1, k + 1):
                    mass = max(mass, offdiagonal_mass(gelfand_invariant_matrix(lam, k, j).entries))
                    if j > 2:
                        continue
                    for _, predicted, observed in harish_chandra_check(lam, k, j):
                        cases += 1
                        if Fraction(observed) != Fraction(predicted):
                            mismatches += 1
        self._record("invariants diagonal", mass < 1e-9, f"off-diagonal mass {mass:.2e}")
        self._record("harish-chandra exact", mismatches == 0, f"{cases} eigenvalues, {mismatches} mismatches")

        for direction, p_list in (((2, 1, 0), [8, 16] if self.quick else [8, 16, 32]),
                                  ((1, 0, 0), [8, 16, 32] if self.quick else [8, 16, 32, 64])):
            residuals = [(p, r) for p, r in harish_chandra_scaling(direction, 2, 2, p_list) if r > 0]
            if len(residuals) < 2:
                self._record(f"harish-chandra scaling {direction}", True, "residual vanishes")
                continue
            fit = linregress(np.log([p for p, _ in residuals]), np.log([r for _, r in residuals]))
            self._record(f"harish-chandra scaling {direction}", fit.slope <= -0.8, f"slope {fit.slope:.3f}")

    def verify_interlacing(self):
        """Minor spectra interlace on random Hermitian matrices"""
        print("\n📋 Step 4: Interlacing")
        rng = np.random.default_rng(0)
        count = 1000 if self.quick else 10000
        violations = 0
        for _ in range(count):
            n = int(rng.integers(2, 6))
            a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            rows = gz_map((a + a.conj().T) / 2).rows
            for upper, lower in zip(rows, rows[1:]):
                if np.any(lower > upper[:-1] + 1e-10) or np.any(lower < upper[1:] - 1e-10):
                    violations += 1
                    break
        self._record("interlacing", violations == 0, f"{count} matrices, {violations} violations")

    def verify_isotropic_states(self):
        """Leakage, reproducing property and norm asymptotics of isotropic states"""
        print("\n📋 Step 5: Isotropic states")
        half, third = Fraction(1, 2), Fraction(1, 3)
        leakage = max(isotropic_state(50, (half,)).leakage, isotropic_state(30, (third, third)).leakage)
        self._record("isotropic leakage", leakage < 1e-8, f"max leakage {leakage:.2e}")

        z = np.array([0.6, 0.8 * np.exp(0.4j)])
        worst = 0.0
        for p in (5, 10, 20):
            for mu in ((p, 0), (p // 2, p - p // 2), (0, p)):
                worst = max(worst, abs(reproducing_check(p, z, mu) - _monomial(z, mu)))
        self._record("reproducing property", worst < 1e-7, f"max deviation {worst:.2e}")

        p_list = [50, 100, 150, 200] if self.quick else list(range(50, 201, 10))
        df, slope = state_norm_asymptotics((half,), p_list)
        ratio = float(df.set_index("p").loc[200, "ratio"])
        self._record("norm asymptotics", abs(slope - 0.5) <= 0.05 and abs(ratio - 1) <= 0.02,
                     f"exponent {slope:.4f}, ratio at p=200 {ratio:.4f}")

    def verify_wigner_remainder(self):
        """Residual slope of the calibrated Wigner prediction"""
        print("\n📋 Step 6: Wigner remainder")
        p_range = "20:120:10" if self.quick else "20:200:4"
        for beta in (math.pi / 5, math.pi / 3, 2 * math.pi / 5):
            config = config_from_mapping({
                "mode": "wigner", "n": "2", "beta": repr(beta), "v": "1/2", "w": "1/2",
                "p": p_range, "calibration_p": "40",
            })
            _, analyzer = ComparisonRun(config).run()
            summary = analyzer.summary()
            self._record(
                f"wigner beta={beta:.4f}",
                bool(summary.passed),
                f"slope {summary.slope} CI {summary.slope_ci}, window {SLOPE_WINDOW}",
            )

    def verify_toric_remainder(self):
        """Residual slope on CP^2 for a Haar unitary with transversal intersections"""
        print("\n📋 Step 7: Toric remainder at n=3")
        v, w = (0.3, 0.3), (0.25, 0.4)
        for seed in range(1, 21):
            g = unitary_group.rvs(3, random_state=seed)
            result = toric_intersections(g, v, w, SolverConfig(starts=64, seed=seed))
            if 0 < len(result) <= 6 and all(pt.transversal and abs(pt.jac_det) > 0.01 for pt in result):
                break
        else:
            self._record("toric n=3", False, "no seed with transversal intersections")
            return
        config = config_from_mapping({
            "mode": "toric", "n": "3", "g": "haar", "seed": str(seed), "v": "3/10 3/10", "w": "1/4 2/5",
            "p": "24:60:6" if self.quick else "24:120:4", "calibration_p": "40",
        })
        _, analyzer = ComparisonRun(config).run()
        slope, _, _ = analyzer.fit_slope()
        passed = slope is not None and -1.4 <= slope <= -0.6
        self._record("toric n=3", passed, f"seed {seed}, {len(result)} points, slope {slope}")

    def verify_decay(self):
        """|exact| p^3 falls monotonically below 1e-6 between disjoint fibres"""
        print("\n📋 Step 8: Decay between disjoint fibres")
        runs = [
            {"mode": "toric", "n": "2", "beta": "0.2", "v": "9/10", "w": "1/10", "p": "30:80:5"},
            {"mode": "toric", "n": "3", "beta": "0.2", "v": "4/5 1/10", "w": "1/10 4/5", "p": "30:60:6"},
        ]
        for raw in runs:
            _, analyzer = ComparisonRun(config_from_mapping({**raw, "calibration_p": "30"})).run()
            summary = analyzer.summary()
            self._record(
                f"decay n={raw['n']}",
                bool(summary.passed),
                f"monotone={summary.decay_monotone}, final={summary.decay_final}",
            )

    def verify_flag_envelope(self):
        """Window-RMS of |p^pow exact|^2 against sum_q 1/|det| on the central fibre of V(2,1,0)"""
        print("\n📋 Step 9: Flag envelope")
        config = config_from_mapping({
            "mode": "flag", "n": "3", "lambda": "2,1,0", "g": "haar", "seed": "3",
            "v": "3/2 1/2 1", "w": "3/2 1/2 1", "p": "16:32:1" if self.quick else "16:48:1",
            "calibration_p": "16", "maslov": "predicted", "window": "8",
        })
        records, analyzer = ComparisonRun(config).run()
        rms = analyzer.window_rms(8)
        skipped = sum(1 for r in records if r.skipped)
        if rms.empty:
            self._record("flag envelope", False, f"no complete window, {skipped} skipped records")
            return
        worst = float((rms["ratio"] - 1).abs().max())
        self._record("flag envelope", worst <= 0.10,
                     f"{len(rms)} windows, worst ratio deviation {worst:.3f}, {skipped} skipped")

    def verify_barycenter_trials(self):
        """Barycenter fibres always meet their translates"""
        print("\n📋 Step 10: Barycenter trials")
        trials = 20 if self.quick else 200
        for n in (2, 3, 4):
            bary = [1.0 / n] * (n - 1)

            def found(seed: int) -> bool:
                g = unitary_group.rvs(n, random_state=seed)
                return toric_intersections(g, bary, bary, SolverConfig(starts=32, seed=seed)).certificate == "found"

            with ThreadPoolExecutor(max_workers=get_settings().max_workers) as pool:
                misses = sum(1 for ok in pool.map(found, range(trials)) if not ok)
            self._record(f"barycenter n={n}", misses == 0, f"{trials} elements, {misses} misses")

    def print_verification_results(self):
        """Print summary"""
        print("\n" + "=" * 60)
        print("📊 VERIFICATION RESULTS")
        print("=" * 60)
        passed = sum(1 for r in self.verification_results if r["success"])
        for result in self.verification_results:
            print(f"{'✅ PASS' if result['success'] else '❌ FAIL'} {result['step']}")
        print(f"\n{passed}/{len(self.verification_results)} checks passed")


def main():
    configure_logging(level="WARNING")
    verification = AcceptanceVerification(quick="--quick" in sys.argv)
    success = verification.run_verification()
    sys.exit(0 if success else 1)


if __name__ == "__main__":
    main()
