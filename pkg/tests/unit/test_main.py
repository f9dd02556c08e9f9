import sys
from pathlib import Path
sys.path.append(str(Path(__file__).parent.parent.parent))

import io
import json

import pandas as pd
import pytest

from src.main import EXIT_GUARD, EXIT_INPUT, EXIT_OK, main

PI_3 = "1.0471975511965976"


def _output(capsys):
    return json.loads(capsys.readouterr().out)


def _csv(capsys):
    return pd.read_csv(io.StringIO(capsys.readouterr().out))


def _write_matrix(path, rows):
    path.write_text("\n".join(" ".join(f"{z.real},{z.imag}" for z in row) for row in rows) + "\n")
    return str(path)


class TestCommands:
    """Test suite for the single-stage subcommands"""

    def test_patterns(self, capsys):
        """Test pattern enumeration for V(2,1,0)"""
        assert main(["patterns", "--n", "3", "--lambda", "2,1,0"]) == EXIT_OK
        out = _output(capsys)

        assert out["lambda"] == [2, 1, 0]
        assert out["count"] == 8
        assert out["patterns"][0] == [[2, 1, 0], [2, 1], [2]]
        assert out["weights"][0] == [2, 1, 0]

    def test_patterns_are_not_truncated(self, capsys):
        """Test that all 64 patterns of V(6,3,0) are listed unless --limit asks otherwise"""
        assert main(["patterns", "--lambda", "6,3,0"]) == EXIT_OK
        assert len(_output(capsys)["patterns"]) == 64

        assert main(["patterns", "--lambda", "6,3,0", "--limit", "5"]) == EXIT_OK
        assert len(_output(capsys)["patterns"]) == 5

    def test_patterns_scaled_weight(self, capsys):
        """Test --p enumerating V(p lambda + rho_bar): (1,0) at p=2 gives (3,-1)"""
        assert main(["patterns", "--lambda", "1,0", "--p", "2"]) == EXIT_OK
        out = _output(capsys)

        assert out["lambda"] == [3, -1]
        assert out["count"] == 5

    def test_patterns_csv(self, capsys):
        """Test CSV emission with one row per pattern"""
        assert main(["patterns", "--lambda", "2,1,0", "--emit", "csv"]) == EXIT_OK
        df = _csv(capsys)

        assert list(df.columns) == ["index", "pattern", "weight"]
        assert len(df) == 8

    def test_lambda_length_mismatch(self, capsys):
        """Test exit code 2 when --n disagrees with --lambda"""
        assert main(["patterns", "--n", "4", "--lambda", "2,1,0"]) == EXIT_INPUT

    def test_invalid_weight(self, capsys):
        """Test exit code 2 for an increasing weight"""
        assert main(["patterns", "--lambda", "0,1,2"]) == EXIT_INPUT

    def test_dimension_guard(self, capsys):
        """Test exit code 3 when the exact path is too large"""
        assert main(["repmat", "--lambda", "12,6,0", "--gen", "12", "--precision", "mp"]) == EXIT_GUARD

    def test_repmat_generator(self, capsys):
        """Test E_12 on the defining representation"""
        assert main(["repmat", "--lambda", "1,0", "--gen", "12"]) == EXIT_OK
        out = _output(capsys)

        assert len(out["basis"]) == 2
        assert sum(abs(x) for row in out["re"] for x in row) == pytest.approx(1.0)
        assert sum(abs(x) for row in out["im"] for x in row) == pytest.approx(0.0)

    def test_repmat_group_element_csv(self, capsys, tmp_path):
        """Test a diagonal g from a file, emitted as row, col, re, im"""
        g = _write_matrix(tmp_path / "g.txt", [[1j, 0], [0, 1]])
        assert main(["repmat", "--lambda", "1,0", "--g", g, "--emit", "csv"]) == EXIT_OK
        df = _csv(capsys)

        assert list(df.columns) == ["row", "col", "re", "im"]
        assert len(df) == 4
        assert sorted(df["im"].abs().round(9)) == [0.0, 0.0, 0.0, 1.0]

    def test_repmat_wrong_shape(self, capsys, tmp_path):
        """Test exit code 2 for a 2x2 g on a U(3) weight"""
        g = _write_matrix(tmp_path / "g.txt", [[1, 0], [0, 1]])
        assert main(["repmat", "--lambda", "1,0,0", "--g", g]) == EXIT_INPUT

    def test_wigner(self, capsys):
        """Test d^1_00 = cos(beta)"""
        assert main(["wigner", "--j", "1", "--m", "0", "--mp", "0", "--beta", "0"]) == EXIT_OK

        assert float(_output(capsys)["value"]) == pytest.approx(1.0)

    def test_wigner_csv(self, capsys):
        """Test d^{1/2}_{1/2,1/2}(pi/3) = cos(pi/6) as CSV"""
        assert main(["wigner", "--j", "1/2", "--m", "1/2", "--mp", "1/2", "--beta", PI_3, "--emit", "csv"]) == EXIT_OK
        df = _csv(capsys)

        assert df.loc[0, "value"] == pytest.approx(3 ** 0.5 / 2)

    def test_matelem(self, capsys):
        """Test the monomial element of the identity"""
        assert main(["matelem", "--n", "2", "--p", "3", "--nu", "2,1", "--mu", "2,1"]) == EXIT_OK

        assert _output(capsys)["value"]["re"] == pytest.approx(1.0)

    def test_matelem_from_file(self, capsys, tmp_path):
        """Test <g z1^2, z1^2> = g_11^2 for a diagonal g read with --g-file"""
        g = _write_matrix(tmp_path / "g.txt", [[1j, 0], [0, 1]])
        assert main(["matelem", "--n", "2", "--g-file", g, "--nu", "2,0", "--mu", "2,0"]) == EXIT_OK

        assert _output(capsys)["value"]["re"] == pytest.approx(-1.0)

    def test_matelem_degree_mismatch(self, capsys):
        """Test exit code 2 when the exponents do not sum to p"""
        assert main(["matelem", "--n", "2", "--p", "4", "--nu", "2,1", "--mu", "2,1"]) == EXIT_INPUT

    def test_gzmap(self, capsys, tmp_path):
        """Test the minor spectra of diag(3, 1)"""
        alpha = _write_matrix(tmp_path / "alpha.txt", [[3, 0], [0, 1]])
        assert main(["gzmap", "--alpha-file", alpha]) == EXIT_OK
        rows = _output(capsys)["rows"]

        assert rows[0] == pytest.approx([3.0, 1.0])
        assert rows[1] == pytest.approx([3.0])

    def test_missing_matrix_file(self, capsys, tmp_path):
        """Test exit code 2 for an unreadable matrix"""
        assert main(["gzmap", "--alpha-file", str(tmp_path / "absent.txt")]) == EXIT_INPUT

    def test_intersect(self, capsys):
        """Test two points for equators rotated by pi/3"""
        assert main(["intersect", "--mode", "toric", "--beta", PI_3, "--v", "1/2", "--w", "1/2",
                     "--starts", "16"]) == EXIT_OK
        out = _output(capsys)

        assert out["certificate"] == "found"
        assert len(out["points"]) == 2
        assert all(len(pt["z"]) == 2 for pt in out["points"])

    def test_intersect_flag_needs_lambda(self, capsys):
        """Test exit code 2 for flag mode without a weight"""
        assert main(["intersect", "--mode", "flag", "--v", "1 1/2 1", "--w", "1 1/2 1"]) == EXIT_INPUT

    def test_predict_toric(self, capsys):
        """Test one prediction per p with the signature rule"""
        assert main(["predict", "--mode", "toric", "--beta", PI_3, "--v", "1/2", "--w", "1/2",
                     "--p-list", "20,24", "--maslov", "predicted", "--starts", "16"]) == EXIT_OK
        out = _output(capsys)

        assert out["mode"] == "toric"
        assert [e["p"] for e in out["predictions"]] == [20, 24]
        for entry in out["predictions"]:
            assert entry["maslov_mode"] == "predicted"
            assert len(entry["components"]) == 2
            assert entry["total"]["abs"] > 0

    def test_bergman(self, capsys):
        """Test the equator norms with an explicit resolution and leakage column"""
        assert main(["bergman", "--n", "2", "--v", "1/2", "--p", "10,12", "--resolution", "48"]) == EXIT_OK
        out = _output(capsys)

        assert [row["p"] for row in out["table"]] == [10, 12]
        assert all("leakage" in row for row in out["table"])

    def test_bergman_coarse_resolution(self, capsys):
        """Test exit code 2 for a grid below 4p"""
        assert main(["bergman", "--v", "1/2", "--p", "20", "--resolution", "40"]) == EXIT_INPUT

    def test_bergman_level_length(self, capsys):
        """Test exit code 2 when --v does not match --n"""
        assert main(["bergman", "--n", "3", "--v", "1/2", "--p", "10"]) == EXIT_INPUT


class TestCompare:
    """Test suite for the compare subcommand"""

    def test_short_wigner_sweep(self, capsys, tmp_path):
        """Test a short sweep without cache, writing CSV and JSON reports"""
        csv_path, json_path = tmp_path / "run.csv", tmp_path / "run.json"
        code = main([
            "compare", "--mode", "wigner", "--n", "2", "--beta", "1.0", "--v", "1/2", "--w", "1/2",
            "--p", "20,22", "--calibration-p", "20", "--starts", "16", "--no-cache",
            "--csv", str(csv_path), "--json", str(json_path),
        ])
        summary = _output(capsys)

        assert code == EXIT_OK
        assert summary["records"] == 2
        assert summary["cache_hits"] == 0
        assert csv_path.exists()
        assert "summary" in json.loads(json_path.read_text())

    def test_bad_levels(self, capsys):
        """Test exit code 2 for levels of the wrong length"""
        code = main(["compare", "--mode", "toric", "--n", "3", "--v", "1/3", "--w", "1/3", "--p", "10",
                     "--no-cache"])

        assert code == EXIT_INPUT
