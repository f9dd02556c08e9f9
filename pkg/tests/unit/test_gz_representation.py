import sys
from pathlib import Path
sys.path.append(str(Path(__file__).parent.parent.parent))

from fractions import Fraction

import numpy as np
import pytest

from src.models.models import LieGenerator
from src.services.gz_representation import (
    DimensionGuardError,
    GeneratorIndexError,
    LogarithmError,
    branching_spectrum,
    casimir_eigenvalue,
    gelfand_invariant_matrix,
    generator_matrix,
    group_matrix,
    group_matrix_element,
    gz_basis,
    harish_chandra_check,
    harish_chandra_scaling,
    offdiagonal_mass,
    sparse_generator,
)
from src.services.gz_combinatorics import branching, pattern_weight
from tests.unit.matrices import haar_unitary, near_identity_unitary


class TestGenerators:
    """Test suite for the Gelfand-Tsetlin generator matrices"""

    def test_defining_representation(self):
        """Test that V(1,0) reproduces the matrix units"""
        e11 = generator_matrix((1, 0), LieGenerator.E(1, 1)).entries
        e12 = generator_matrix((1, 0), LieGenerator.E(1, 2)).entries

        assert np.allclose(e11, np.diag([1, 0]))
        assert np.allclose(e12, [[0, 1], [0, 0]])

    @pytest.mark.parametrize("lam", [(2, 0), (2, 1, 0), (3, 1, 0), (1, 0, 0, 0)])
    def test_commutation_relations(self, lam):
        """Test [E_ab, E_cd] = delta_bc E_ad - delta_da E_cb on a sample of pairs"""
        n = len(lam)

        def e(a, b):
            return sparse_generator(lam, a, b).toarray()

        for a, b, c, d in [(1, 2, 2, 1), (1, 2, 2, n), (n, 1, 1, 2), (2, 1, 1, n), (1, n, n, 1)]:
            lhs = e(a, b) @ e(c, d) - e(c, d) @ e(a, b)
            rhs = (e(a, d) if b == c else 0) - (e(c, b) if d == a else 0)
            assert np.allclose(lhs, rhs, atol=1e-10)

    def test_lowering_is_transpose(self):
        """Test E_21 = E_12^T with real non-negative entries"""
        e12 = sparse_generator((3, 1, 0), 1, 2).toarray()
        e21 = sparse_generator((3, 1, 0), 2, 1).toarray()

        assert np.allclose(e21, e12.T)
        assert np.all(e12.real >= 0)

    def test_index_out_of_range(self):
        """Test that generators beyond n are rejected"""
        with pytest.raises(GeneratorIndexError):
            generator_matrix((1, 0), LieGenerator.E(1, 3))

    def test_mp_guard_before_assembly(self):
        """Test that mp precision is refused above the exact dimension limit"""
        with pytest.raises(DimensionGuardError):
            generator_matrix((12, 6, 0), LieGenerator.E(1, 2), precision="mp")

    def test_mp_matches_double(self):
        """Test the mpmath generator against the double one"""
        rep = generator_matrix((2, 1, 0), LieGenerator.E(1, 3), precision="mp")
        exact = np.array([[complex(rep.exact[i, j]) for j in range(rep.dim)] for i in range(rep.dim)])

        assert np.allclose(exact, rep.entries, atol=1e-14)


class TestGroupMatrix:
    """Test suite for the represented group element"""

    def test_defining_representation_is_identity_map(self):
        """Test that V(1,0) returns g itself"""
        g = near_identity_unitary(2, seed=3)

        assert np.allclose(group_matrix((1, 0), g).entries, g, atol=1e-12)

    def test_unitary_and_homomorphism(self):
        """Test unitarity and rho(g1 g2) = rho(g1) rho(g2)"""
        lam = (2, 1, 0)
        g1, g2 = near_identity_unitary(3, seed=1), near_identity_unitary(3, seed=2)
        r1, r2 = group_matrix(lam, g1).entries, group_matrix(lam, g2).entries
        r12 = group_matrix(lam, g1 @ g2).entries

        assert np.allclose(r1.conj().T @ r1, np.eye(8), atol=1e-10)
        assert np.allclose(r12, r1 @ r2, atol=1e-9)

    def test_diagonal_element_acts_by_weights(self):
        """Test that a torus element is diagonal with character entries"""
        phases = np.array([0.3, -0.2, 0.1])
        g = np.diag(np.exp(1j * phases))
        rep = group_matrix((2, 1, 0), g)

        expected = [np.exp(1j * np.dot(pattern_weight(pt), phases)) for pt in rep.basis]
        assert np.allclose(rep.entries, np.diag(expected), atol=1e-12)

    def test_eigenvalue_at_minus_one(self):
        """Test that the logarithm refuses an eigenvalue at -1"""
        with pytest.raises(LogarithmError):
            group_matrix((1, 0), np.diag([-1.0, 1.0]))

    def test_non_unitary_rejected(self):
        """Test that a non-unitary matrix is rejected"""
        with pytest.raises(ValueError):
            group_matrix((1, 0), np.array([[1.0, 0.1], [0.0, 1.0]]))

    def test_dimension_guard(self):
        """Test that a large representation is refused"""
        with pytest.raises(DimensionGuardError):
            group_matrix((40, 20, 0), np.eye(3))

    def test_single_entry_matches_dense(self):
        """Test the sparse single entry against the dense matrix"""
        lam = (3, 1, 0)
        g = haar_unitary(3, seed=6)
        rep = group_matrix(lam, g)

        for i, j in ((0, 0), (3, 7), (14, 2)):
            value = group_matrix_element(lam, g, rep.basis[i], rep.basis[j])
            assert abs(value - rep.entries[i, j]) < 1e-9

    def test_single_entry_beyond_dense_guard(self):
        """Test that single entries stay available where the dense matrix is refused"""
        lam = (40, 20, 0)
        phases = np.array([0.3, -0.2, 0.1])
        g = np.diag(np.exp(1j * phases))
        basis, _ = gz_basis(lam)

        assert len(basis) > 5000
        value = group_matrix_element(lam, g, basis[5], basis[5])
        assert value == pytest.approx(np.exp(1j * np.dot(pattern_weight(basis[5]), phases)), abs=1e-10)
        assert abs(group_matrix_element(lam, g, basis[5], basis[6])) < 1e-10

    def test_sparse_guard(self):
        """Test that the sparse path has its own guard"""
        with pytest.raises(DimensionGuardError):
            group_matrix_element((400, 200, 0), np.eye(3), None, None)


class TestInvariants:
    """Test suite for the quantized Gelfand invariants"""

    def test_invariants_are_diagonal(self):
        """Test that the degree-2 invariant of the 2-block is diagonal"""
        m = gelfand_invariant_matrix((2, 1, 0), 2, 2).entries

        assert offdiagonal_mass(m) < 1e-12

    def test_defining_representation_value(self):
        """Test e_2 of the full block on V(1,0)"""
        results = harish_chandra_check((1, 0), 2, 2)

        assert all(predicted == Fraction(-1, 2) for _, predicted, _ in results)
        assert all(observed == Fraction(-1, 2) for _, _, observed in results)

    def test_casimir_eigenvalue(self):
        """Test the closed forms of degree one and two"""
        assert casimir_eigenvalue((2, 1), 1) == 3
        assert casimir_eigenvalue((2, 1), 2) == Fraction(3, 2)
        with pytest.raises(GeneratorIndexError):
            casimir_eigenvalue((2, 1), 3)

    @pytest.mark.parametrize("k,j", [(1, 1), (2, 1), (2, 2), (3, 2)])
    def test_harish_chandra_exact(self, k, j):
        """Test certified eigenvalues against the closed form on V(2,1,0)"""
        for pattern, predicted, observed in harish_chandra_check((2, 1, 0), k, j):
            assert observed == predicted, pattern

    def test_harish_chandra_scaling(self):
        """Test that the normalized invariant approaches e_j of the row"""
        residuals = harish_chandra_scaling((1, 0), 2, 2, [1, 2, 4])

        for p, worst in residuals:
            assert worst == pytest.approx(1 / (2 * p), abs=1e-12)

    def test_invalid_level(self):
        """Test that j > k is rejected"""
        with pytest.raises(GeneratorIndexError):
            gelfand_invariant_matrix((2, 1, 0), 1, 2)


class TestBranchingSpectrum:
    """Test suite for numerically detected branching"""

    @pytest.mark.parametrize("lam", [(2, 1, 0), (2, 2, 0), (3, 1, 0)])
    def test_matches_interlacing_rule(self, lam):
        """Test highest vectors of u(n-1) against the branching rule"""
        found = [w.entries for w in branching_spectrum(lam)]
        expected = sorted((w.entries for w in branching(lam)), reverse=True)

        assert found == expected
