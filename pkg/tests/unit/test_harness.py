import sys
from pathlib import Path
sys.path.append(str(Path(__file__).parent.parent.parent))

from fractions import Fraction

import numpy as np
import pandas as pd
import pytest

from src.config import get_settings
from src.models.models import (
    ComparisonRecord,
    ComponentPrediction,
    ConfigError,
    ExperimentMode,
    GZPattern,
    SelectionRule,
)
from src.services.cache import ResultCache
from src.services.gz_representation import group_matrix
from src.services.harness import (
    ComparisonRun,
    ConvergenceAnalyzer,
    LevelSelectionError,
    config_from_mapping,
    load_matrix,
    parse_config_file,
    parse_fraction_list,
    parse_p_list,
    resolve_group_element,
    run_comparison,
    select_flag_level,
    select_toric_level,
    toric_degree,
)
from src.services.semiclassical_predictor import flag_levels

HALF = Fraction(1, 2)


class TestParsing:
    """Test suite for experiment inputs"""

    def test_fraction_list(self):
        """Test rationals and decimals, space or comma separated"""
        assert parse_fraction_list("1/2 0.25") == (HALF, Fraction(1, 4))
        assert parse_fraction_list("1/3,2/3") == (Fraction(1, 3), Fraction(2, 3))
        with pytest.raises(ConfigError):
            parse_fraction_list("1/0")

    def test_p_list(self):
        """Test comma lists and inclusive ranges"""
        assert parse_p_list("20,40, 80") == (20, 40, 80)
        assert parse_p_list("10:20:5") == (10, 15, 20)
        assert parse_p_list("3:5") == (3, 4, 5)
        with pytest.raises(ConfigError):
            parse_p_list("ten")

    def test_load_matrix(self, tmp_path):
        """Test re,im pairs per row with comments"""
        path = tmp_path / "g.txt"
        path.write_text("# identity\n1,0, 0,0\n0,0 1,0\n")

        assert np.allclose(load_matrix(str(path)), np.eye(2))

    def test_load_matrix_rejects_odd_rows(self, tmp_path):
        """Test that a dangling real part is rejected"""
        path = tmp_path / "g.txt"
        path.write_text("1,0,0\n0,0,1,0\n")

        with pytest.raises(ConfigError):
            load_matrix(str(path))

    def test_config_file(self, tmp_path):
        """Test key = value parsing with comments"""
        path = tmp_path / "run.cfg"
        path.write_text(
            "mode = wigner  # spin check\n"
            "n = 2\n"
            "beta = 1.0\n"
            "v = 1/2\n"
            "w = 1/2\n"
            "p = 41:81:20\n"
            "calibration_p = 41\n"
        )
        config = parse_config_file(str(path))

        assert config.mode == ExperimentMode.WIGNER
        assert config.p_list == (41, 61, 81)
        assert config.v == (HALF,)
        assert config.calibration_p == 41

    def test_config_shape_mismatch(self):
        """Test that levels of the wrong length are rejected"""
        with pytest.raises(ConfigError):
            config_from_mapping({"mode": "toric", "n": "3", "v": "1/3", "w": "1/3 1/3", "p": "10"})

    def test_flag_config_needs_weight(self):
        """Test that flag mode requires lambda of length n"""
        with pytest.raises(ConfigError):
            config_from_mapping({"mode": "flag", "n": "3", "v": "1 1 1", "w": "1 1 1", "p": "4"})

    def test_group_elements(self):
        """Test the rotation embedding and the seeded Haar sample"""
        rot = resolve_group_element(config_from_mapping({"n": "3", "beta": "0.5", "v": "0 0", "w": "0 0"}))
        haar = config_from_mapping({"n": "3", "g": "haar", "seed": "5", "v": "0 0", "w": "0 0"})

        assert rot[2, 2] == 1
        assert rot[1, 0] == pytest.approx(np.sin(0.25))
        assert np.allclose(resolve_group_element(haar), resolve_group_element(haar))


class TestLevelSelection:
    """Test suite for lattice level selection"""

    def test_toric_degree(self):
        """Test the degree rule for even and odd n"""
        assert toric_degree(2, 41) == 40
        assert toric_degree(3, 10) == 10
        assert toric_degree(4, 10) == 8

    def test_exact_level(self):
        """Test that an on-lattice target is hit"""
        level = select_toric_level(2, 41, (HALF,))

        assert level.nu == (20, 20)
        assert level.k == 41
        assert level.levels == (HALF,)

    def test_halves_round_down(self):
        """Test tie-breaking toward the smaller monomial exponent"""
        level = select_toric_level(2, 40, (HALF,))

        assert level.nu == (20, 19)
        assert level.levels == (Fraction(39, 80),)

    def test_degree_overflow_trimmed(self):
        """Test that the exponent suffix is trimmed to the degree"""
        level = select_toric_level(3, 3, (HALF, HALF))

        assert sum(level.nu) == 3
        assert level.nu == (0, 1, 2)

    def test_fixed_rule_off_lattice(self):
        """Test that the fixed rule refuses an off-lattice target"""
        with pytest.raises(LevelSelectionError):
            select_toric_level(2, 41, (Fraction(1, 3),), SelectionRule.FIXED)

    def test_flag_round_trip(self):
        """Test that the levels of a pattern select that pattern"""
        pattern = GZPattern(((5, 2, -1), (5, 2), (5,)))
        _, levels = flag_levels((2, 1, 0), 2, pattern)

        assert select_flag_level((2, 1, 0), 2, levels) == pattern

    def test_flag_clamped_into_interlacing(self):
        """Test that far targets are clamped to a valid pattern"""
        pattern = select_flag_level((2, 1, 0), 2, (10, -10, 0))

        assert pattern.rows[1] == (5, -1)
        assert pattern.rows[2][0] in range(-1, 6)


def _synthetic_records(residual, ps=range(20, 101, 10), components=True):
    comps = [ComponentPrediction(amplitude=0.6, eta=0.1), ComponentPrediction(amplitude=0.4, eta=0.3)]
    return [
        ComparisonRecord(p=p, k=float(p), exact=1.0 / np.sqrt(p), predicted=1.0, residual=residual(p),
                         phase_alignment=1 + 0j, components=comps if components else [], power=0.5)
        for p in ps
    ]


class TestConvergenceAnalyzer:
    """Test suite for verdicts over records"""

    def test_slope_of_inverse_residual(self):
        """Test slope -1 for residuals 1/p and a passing verdict"""
        analyzer = ConvergenceAnalyzer(_synthetic_records(lambda p: 1.0 / p))
        slope, stderr, (lo, hi) = analyzer.fit_slope()

        assert slope == pytest.approx(-1.0)
        assert lo <= slope <= hi
        assert analyzer.summary().passed is True

    def test_flat_residual_fails(self):
        """Test that a residual that does not decay fails"""
        analyzer = ConvergenceAnalyzer(_synthetic_records(lambda p: 0.3 + 0.01 * np.sin(p)))

        assert analyzer.summary().passed is False

    def test_envelope_ratio(self):
        """Test |scaled exact| against the summed amplitudes"""
        analyzer = ConvergenceAnalyzer(_synthetic_records(lambda p: 1.0 / p))

        assert analyzer.envelope_ratio(min_p=0) == pytest.approx(1.0)

    def test_window_rms(self):
        """Test rolling means of observed and incoherent predictions"""
        analyzer = ConvergenceAnalyzer(_synthetic_records(lambda p: 1.0 / p), window=3)
        rms = analyzer.window_rms()

        assert len(rms) == 7
        assert np.allclose(rms["observed"], 1.0)
        assert np.allclose(rms["predicted"], 0.52)

    def test_decay_verdict(self):
        """Test the decay check on exponentially small values"""
        records = _synthetic_records(lambda p: 0.0, ps=range(40, 81, 10), components=False)
        for r in records:
            r.exact = np.exp(-float(r.p))
        analyzer = ConvergenceAnalyzer(records)
        monotone, final = analyzer.decay_check()

        assert monotone
        assert final < 1e-6
        assert analyzer.summary().passed is True

    def test_skipped_records_excluded(self):
        """Test that skipped rows do not enter fits"""
        records = _synthetic_records(lambda p: 1.0 / p)
        records[0].skipped, records[0].residual = True, 50.0
        summary = ConvergenceAnalyzer(records).summary()

        assert summary.skipped == 1
        assert summary.slope == pytest.approx(-1.0)

    def test_exports(self, tmp_path):
        """Test CSV and whitespace exports"""
        analyzer = ConvergenceAnalyzer(_synthetic_records(lambda p: 1.0 / p))
        analyzer.to_csv(str(tmp_path / "run.csv"))
        analyzer.to_dat(str(tmp_path / "run.dat"))

        df = pd.read_csv(tmp_path / "run.csv")
        assert list(df["p"]) == list(range(20, 101, 10))
        assert "abs_scaled" in df.columns
        assert len((tmp_path / "run.dat").read_text().splitlines()) == 9


class TestComparisonRun:
    """End-to-end comparison runs"""

    @pytest.mark.slow
    def test_wigner_comparison(self, tmp_path):
        """Test that the calibrated prediction tracks d^j_00 at beta = 1"""
        config = config_from_mapping({
            "mode": "wigner", "n": "2", "beta": "1.0", "v": "1/2", "w": "1/2",
            "p": "41,43,61,81", "calibration_p": "41",
        })
        cache = ResultCache(tmp_path)
        records, analyzer = ComparisonRun(config, cache).run()

        by_p = {r.p: r for r in records}
        assert not any(r.skipped for r in records)
        assert by_p[61].residual < 0.06
        assert by_p[81].residual < 0.06
        assert len(cache) >= 4

        again, _ = ComparisonRun(config, ResultCache(tmp_path)).run()
        assert all(r.cache_hit for r in again)
        assert [r.exact for r in again] == [r.exact for r in records]

    @pytest.mark.slow
    def test_decay_run(self):
        """Test a classically forbidden pair of levels"""
        config = config_from_mapping({
            "mode": "toric", "n": "2", "beta": "0.2", "v": "9/10", "w": "1/10",
            "p": "40:80:10", "calibration_p": "40",
        })
        records, analyzer = ComparisonRun(config).run()

        assert all(r.predicted == 0 for r in records)
        summary = analyzer.summary()
        assert summary.decay_monotone
        assert summary.passed is True

    def test_cold_and_warm_runs_agree(self, tmp_path):
        """Test that a cached rerun reproduces the records and summary"""
        config = config_from_mapping({
            "mode": "wigner", "n": "2", "beta": "1.0", "v": "1/2", "w": "1/2",
            "p": "20,22,24", "calibration_p": "20", "starts": "16",
        })
        cold_records, cold = run_comparison(config, ResultCache(tmp_path))
        warm_records, warm = run_comparison(config, ResultCache(tmp_path))

        assert cold.cache_hits == 0
        assert warm.cache_hits == 3
        assert [r.residual for r in warm_records] == [r.residual for r in cold_records]
        assert warm.slope == cold.slope

    @pytest.mark.slow
    def test_wigner_residual_slope(self):
        """Test that the aligned residual decays like 1/p"""
        config = config_from_mapping({
            "mode": "wigner", "n": "2", "beta": "1.0", "v": "1/2", "w": "1/2",
            "p": "20:200:6", "calibration_p": "20", "starts": "16",
        })
        _, analyzer = ComparisonRun(config).run()
        slope, _, _ = analyzer.fit_slope()

        assert slope is not None
        assert -1.6 < slope < -0.4

    @pytest.mark.slow
    def test_toric_run_in_cp2(self):
        """Test a Haar element on CP^2 at the barycenter"""
        config = config_from_mapping({
            "mode": "toric", "n": "3", "g": "haar", "seed": "5", "v": "1/3 1/3", "w": "1/3 1/3",
            "p": "24:48:6", "calibration_p": "24", "maslov": "predicted",
            "starts": "32",
        })
        records, analyzer = ComparisonRun(config).run()

        assert [r.p for r in records] == [24, 30, 36, 42, 48]
        active = [r for r in records if not r.skipped]
        assert active
        for r in active:
            assert r.power == 1.0
            assert r.components
            assert r.abs_scaled < 1.25 * sum(c.amplitude for c in r.components)
        assert analyzer.summary().records == 5

    @pytest.mark.slow
    def test_small_flag_run(self):
        """Test flag-mode exact values against the dense group matrix"""
        config = config_from_mapping({
            "mode": "flag", "n": "3", "lambda": "2,1,0", "g": "haar", "seed": "4",
            "v": "3/2 1/2 1", "w": "5/4 3/4 1", "p": "6,7,8", "calibration_p": "6", "starts": "8",
        })
        records, _ = ComparisonRun(config).run()
        g = resolve_group_element(config)

        assert [r.p for r in records] == [6, 7, 8]
        for r in records:
            weight = (2 * r.p + 1, r.p, -1)
            src = select_flag_level(config.lam, r.p, config.v)
            dst = select_flag_level(config.lam, r.p, config.w)
            dense = group_matrix(weight, g)
            expected = dense.entries[dense.basis.index(dst), dense.basis.index(src)]
            assert abs(r.exact - expected) < 1e-9
            assert r.power == 1.5
            assert r.skipped or r.residual >= 0

    def test_guard_skips_large_p(self, monkeypatch):
        """Test that a p above the sparse guard becomes a skipped record"""
        monkeypatch.setenv("GZSC_SPARSE_DIMENSION_GUARD", "100")
        get_settings.cache_clear()
        try:
            config = config_from_mapping({
                "mode": "flag", "n": "3", "lambda": "2,1,0", "g": "haar", "seed": "4",
                "v": "3/2 1/2 1", "w": "3/2 1/2 1", "p": "1,2,4", "calibration_p": "1", "starts": "4",
            })
            records, _ = ComparisonRun(config).run()
        finally:
            monkeypatch.delenv("GZSC_SPARSE_DIMENSION_GUARD")
            get_settings.cache_clear()

        by_p = {r.p: r for r in records}
        assert by_p[4].skipped
        assert "guard" in by_p[4].reason
        assert not any("guard" in by_p[p].reason for p in (1, 2))
