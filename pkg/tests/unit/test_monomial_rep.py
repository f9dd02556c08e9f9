import sys
from pathlib import Path
sys.path.append(str(Path(__file__).parent.parent.parent))

import math
from fractions import Fraction

import numpy as np
import pytest
import sympy

from src.services.monomial_rep import (
    MultiIndexError,
    element_matrix,
    exact_matrix_element,
    monomial_norm,
    monomial_norm_squared,
    multi_indices,
    rotation_matrix,
    spin_labels,
    wigner_d,
)
from src.services.gz_combinatorics import pattern_weight
from src.services.gz_representation import group_matrix
from tests.unit.matrices import haar_unitary, near_identity_unitary


class TestMonomialBasis:
    """Test suite for the monomial basis of V(p,0,...,0)"""

    def test_multi_indices_order_and_count(self):
        """Test descending order and the binomial count"""
        assert multi_indices(2, 2) == [(2, 0), (1, 1), (0, 2)]
        assert len(multi_indices(3, 5)) == math.comb(7, 2)

    def test_norms(self):
        """Test Fubini-Study norms of a few monomials"""
        assert monomial_norm_squared((1, 0)) == Fraction(1, 2)
        assert monomial_norm_squared((1, 1)) == Fraction(1, 6)
        assert monomial_norm_squared((2, 0)) == Fraction(1, 3)
        assert monomial_norm((2, 0, 0)) == sympy.sqrt(sympy.Rational(1, 6))

    def test_negative_index_rejected(self):
        """Test that negative exponents are rejected"""
        with pytest.raises(MultiIndexError):
            monomial_norm_squared((2, -1))

    def test_spin_labels(self):
        """Test (j, m) of a two-variable monomial"""
        assert spin_labels((3, 1)) == (2, 1)
        assert spin_labels((0, 3)) == (Fraction(3, 2), Fraction(-3, 2))


class TestMatrixElements:
    """Test suite for exact and high-precision matrix elements"""

    def test_degree_one_is_g(self):
        """Test that p=1 reproduces the matrix of g"""
        g = haar_unitary(3, seed=5)
        basis, r = element_matrix(1, g)

        assert basis == [(1, 0, 0), (0, 1, 0), (0, 0, 1)]
        assert np.allclose(r, g, atol=1e-14)

    def test_element_matrix_unitary(self):
        """Test unitarity of the degree-3 matrix of a Haar element"""
        _, r = element_matrix(3, haar_unitary(3, seed=7))

        assert r.shape == (10, 10)
        assert np.allclose(r.conj().T @ r, np.eye(10), atol=1e-12)

    def test_element_matrix_homomorphism(self):
        """Test R(g1 g2) = R(g1) R(g2) at p=2"""
        g1, g2 = haar_unitary(2, seed=1), haar_unitary(2, seed=2)
        _, r1 = element_matrix(2, g1)
        _, r2 = element_matrix(2, g2)
        _, r12 = element_matrix(2, g1 @ g2)

        assert np.allclose(r12, r1 @ r2, atol=1e-12)

    @pytest.mark.parametrize("p", [1, 3, 6])
    def test_matches_gelfand_zetlin_matrix(self, p):
        """Test that monomial and GZ matrices of g agree up to one phase per basis vector"""
        g = near_identity_unitary(3, seed=9, scale=1.5)
        basis, mono = element_matrix(p, g)
        rep = group_matrix((p, 0, 0), g)
        order = [basis.index(pattern_weight(pt)) for pt in rep.basis]
        m = mono[np.ix_(order, order)]

        ratio = rep.entries[:, 0] / m[:, 0]
        phases = ratio / np.abs(ratio)
        aligned = phases[:, None] * m * phases.conj()[None, :]

        assert len(order) == len(set(order)) == (p + 1) * (p + 2) // 2
        assert np.max(np.abs(aligned - rep.entries)) < 1e-9

    def test_exact_rational_rotation(self):
        """Test the sympy path with cos(b/2)=3/5, sin(b/2)=4/5"""
        g = [[Fraction(3, 5), Fraction(-4, 5)], [Fraction(4, 5), Fraction(3, 5)]]

        first = exact_matrix_element(1, g, (0, 1), (1, 0))
        second = exact_matrix_element(2, g, (1, 1), (2, 0))

        assert first.provenance == "exact"
        assert first.value == sympy.Rational(-4, 5)
        assert sympy.simplify(second.value + 12 * sympy.sqrt(2) / 25) == 0

    def test_float_path_provenance(self):
        """Test that floating point input is evaluated in mpmath"""
        element = exact_matrix_element(2, rotation_matrix(0.4), (1, 1), (2, 0))

        assert element.provenance == "float128"
        assert complex(element) == pytest.approx(-math.sin(0.4) / math.sqrt(2), abs=1e-14)

    def test_degree_mismatch(self):
        """Test that multi-indices of the wrong degree are rejected"""
        with pytest.raises(MultiIndexError):
            exact_matrix_element(2, np.eye(2), (1, 0), (2, 0))


class TestWigner:
    """Test suite for Wigner small-d elements"""

    @pytest.mark.parametrize("beta", [0.3, 1.0, 2.5])
    def test_spin_one_closed_forms(self, beta):
        """Test d^1 against its closed forms"""
        assert float(wigner_d(1, 1, 0, beta)) == pytest.approx(-math.sin(beta) / math.sqrt(2), abs=1e-14)
        assert float(wigner_d(1, 0, 0, beta)) == pytest.approx(math.cos(beta), abs=1e-14)
        assert float(wigner_d(1, 1, 1, beta)) == pytest.approx((1 + math.cos(beta)) / 2, abs=1e-14)

    def test_spin_half(self):
        """Test d^(1/2) against the rotation matrix"""
        beta = 0.8
        half = Fraction(1, 2)

        assert float(wigner_d(half, half, -half, beta)) == pytest.approx(-math.sin(beta / 2), abs=1e-15)
        assert float(wigner_d(half, -half, half, beta)) == pytest.approx(math.sin(beta / 2), abs=1e-15)

    def test_monomial_matrix_is_wigner(self):
        """Test R[mu, nu] = d^j_{m(mu), m(nu)} for a rotation at p=4"""
        beta = 1.1
        basis, r = element_matrix(4, rotation_matrix(beta))

        for i, mu in enumerate(basis):
            for c, nu in enumerate(basis):
                j, m = spin_labels(mu)
                _, mp = spin_labels(nu)
                assert r[i, c].real == pytest.approx(float(wigner_d(j, m, mp, beta)), abs=1e-13)

    def test_invalid_labels(self):
        """Test that inconsistent labels are rejected"""
        with pytest.raises(ValueError):
            wigner_d(1, Fraction(1, 2), 0, 0.5)
        with pytest.raises(ValueError):
            wigner_d(1, 2, 0, 0.5)
