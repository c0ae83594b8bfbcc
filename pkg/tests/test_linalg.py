import numpy as np
import pytest

from tvseg import linalg
from tvseg.errors import InvalidInputError, SingularSystemError


def sylvester_residual_ok(a, b, c, z):
    lhs = np.linalg.norm(a @ z + z @ b - c)
    bound = 1e-8 * (np.linalg.norm(a) + np.linalg.norm(b)) * np.linalg.norm(z)
    return lhs <= bound + 1e-10 * np.linalg.norm(c)


class TestSchur:
    def test_identity(self):
        fact = linalg.schur(np.eye(4))
        assert np.allclose(fact.q @ fact.t @ fact.q.T, np.eye(4), atol=1e-12)

    def test_diagonal_eigenvalues(self):
        fact = linalg.schur(np.diag([3.0, 1.0, 2.0]))
        assert sorted(np.diag(fact.t)) == pytest.approx([1.0, 2.0, 3.0])

    def test_factorization_invariants(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((20, 20))
        fact = linalg.schur(a)
        n = a.shape[0]
        assert np.linalg.norm(fact.q.T @ fact.q - np.eye(n)) <= 1e-10 * n
        assert np.linalg.norm(fact.q @ fact.t @ fact.q.T - a) <= 1e-8 * np.linalg.norm(a)

    def test_symmetric_eigenvalues_cross_check(self):
        # eigenvalues read off T must match the symmetric eigensolver
        rng = np.random.default_rng(1)
        m = rng.standard_normal((20, 20))
        a = (m + m.T) / 2
        fact = linalg.schur(a)
        schur_vals = np.sort(linalg._quasi_eigvals(fact.t).real)
        eigh_vals, _ = linalg.smallest_eigvecs(a, 20)
        assert np.allclose(schur_vals, eigh_vals, atol=1e-8)

    def test_nonfinite_rejected(self):
        with pytest.raises(InvalidInputError):
            linalg.schur(np.array([[1.0, np.nan], [0.0, 1.0]]))


class TestSolveSylvester:
    def test_identity_coefficients(self):
        rng = np.random.default_rng(2)
        m = rng.standard_normal((5, 5))
        z = linalg.solve_sylvester(np.eye(5), np.eye(5), 2 * m)
        assert np.allclose(z, m, atol=1e-12)

    def test_diagonal_decoupled(self):
        a = np.diag([1.0, 2.0])
        b = np.diag([3.0, 4.0])
        c = np.arange(1.0, 5.0).reshape(2, 2)
        z = linalg.solve_sylvester(a, b, c)
        denom = np.array([[4.0, 5.0], [5.0, 6.0]])
        assert np.allclose(z, c / denom, atol=1e-14)

    @pytest.mark.parametrize("seed", range(5))
    def test_random_residual(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((50, 50))
        b = rng.standard_normal((50, 50))
        c = rng.standard_normal((50, 50))
        z = linalg.solve_sylvester(a, b, c)
        assert sylvester_residual_ok(a, b, c, z)

    def test_rectangular_c(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((8, 8))
        b = rng.standard_normal((5, 5))
        c = rng.standard_normal((8, 5))
        z = linalg.solve_sylvester(a, b, c)
        assert sylvester_residual_ok(a, b, c, z)

    def test_symmetric_fast_path_residual(self):
        rng = np.random.default_rng(4)
        m = rng.standard_normal((40, 40))
        a = m @ m.T + np.eye(40)
        m2 = rng.standard_normal((40, 40))
        b = m2 @ m2.T + np.eye(40)
        c = rng.standard_normal((40, 40))
        z = linalg.solve_sylvester(a, b, c)
        assert sylvester_residual_ok(a, b, c, z)

    def test_permutation_consistency(self):
        # permuting the problem and un-permuting the solution is a no-op
        rng = np.random.default_rng(5)
        a = rng.standard_normal((12, 12))
        b = rng.standard_normal((12, 12))
        c = rng.standard_normal((12, 12))
        z = linalg.solve_sylvester(a, b, c)
        perm = rng.permutation(12)
        p = np.eye(12)[perm]
        z_perm = linalg.solve_sylvester(p @ a @ p.T, b, p @ c)
        assert np.allclose(p @ z, z_perm, atol=1e-8)

    def test_singular_raises(self):
        # a and -b share the eigenvalue 0
        a = np.diag([0.0, 1.0])
        b = np.diag([0.0, 2.0])
        with pytest.raises(SingularSystemError):
            linalg.solve_sylvester(a, b, np.ones((2, 2)))

    def test_drop_singular_consistent_system(self):
        # consistent singular system: minimum-norm solve has tiny residual
        rng = np.random.default_rng(6)
        x = rng.standard_normal((3, 10))
        a = 2 * x.T @ x
        b = 2 * np.ones((10, 10))
        c = a.copy()  # orthogonality of the null spaces makes this consistent
        z = linalg.solve_sylvester(a, b, c, drop_singular=True)
        assert sylvester_residual_ok(a, b, c, z)

    def test_drop_singular_requires_symmetry(self):
        rng = np.random.default_rng(7)
        with pytest.raises(InvalidInputError):
            linalg.solve_sylvester(
                rng.standard_normal((4, 4)), np.eye(4), np.eye(4), drop_singular=True
            )

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            linalg.solve_sylvester(np.eye(3), np.eye(4), np.zeros((4, 3)))


class TestSmallestEigvecs:
    def test_two_node_laplacian(self):
        lap = np.array([[1.0, -1.0], [-1.0, 1.0]])
        values, vectors = linalg.smallest_eigvecs(lap, 1)
        assert values[0] == pytest.approx(0.0, abs=1e-12)
        assert np.allclose(np.abs(vectors[:, 0]), 1 / np.sqrt(2), atol=1e-12)

    def test_diagonal(self):
        values, vectors = linalg.smallest_eigvecs(np.diag([5.0, 1.0, 3.0]), 2)
        assert np.allclose(values, [1.0, 3.0], atol=1e-14)
        assert np.allclose(np.abs(vectors[:, 0]), [0, 1, 0], atol=1e-14)
        assert np.allclose(np.abs(vectors[:, 1]), [0, 0, 1], atol=1e-14)

    def test_rayleigh_and_orthonormality(self):
        rng = np.random.default_rng(8)
        m = rng.standard_normal((30, 30))
        s = (m + m.T) / 2
        values, vectors = linalg.smallest_eigvecs(s, 4)
        for j in range(4):
            v = vectors[:, j]
            assert np.linalg.norm(s @ v - values[j] * v) <= 1e-8 * np.linalg.norm(s)
            rayleigh = v @ s @ v
            assert rayleigh == pytest.approx(values[j], abs=1e-10)
        assert np.linalg.norm(vectors.T @ vectors - np.eye(4)) <= 1e-10
        assert np.all(np.diff(values) >= -1e-14)

    def test_sign_convention(self):
        rng = np.random.default_rng(9)
        m = rng.standard_normal((15, 15))
        s = (m + m.T) / 2
        _, vectors = linalg.smallest_eigvecs(s, 5)
        for j in range(5):
            pivot = np.argmax(np.abs(vectors[:, j]))
            assert vectors[pivot, j] > 0

    def test_block_laplacian_null_multiplicity(self):
        # c disconnected components give eigenvalue 0 with multiplicity c
        blocks = []
        rng = np.random.default_rng(10)
        for size in (4, 5, 6):
            w = np.abs(rng.standard_normal((size, size)))
            w = (w + w.T) / 2
            np.fill_diagonal(w, 0.0)
            d = np.diag(1 / np.sqrt(w.sum(axis=1)))
            blocks.append(np.eye(size) - d @ w @ d)
        lap = np.zeros((15, 15))
        offset = 0
        for b in blocks:
            lap[offset : offset + b.shape[0], offset : offset + b.shape[0]] = b
            offset += b.shape[0]
        values, _ = linalg.smallest_eigvecs(lap, 4)
        assert np.all(np.abs(values[:3]) <= 1e-8)
        assert values[3] > 1e-6

    def test_asymmetric_rejected(self):
        with pytest.raises(InvalidInputError):
            linalg.smallest_eigvecs(np.array([[1.0, 2.0], [0.0, 1.0]]), 1)


class TestProjectFeasible:
    def test_rule(self):
        z = np.array([[1.0, -2.0], [3.0, 4.0]])
        assert np.array_equal(
            linalg.project_feasible(z), np.array([[0.0, 0.0], [3.0, 0.0]])
        )

    def test_feasible_unchanged(self):
        z = np.array([[0.0, 2.0], [1.0, 0.0]])
        assert np.array_equal(linalg.project_feasible(z), z)

    def test_idempotent(self):
        rng = np.random.default_rng(11)
        z = rng.standard_normal((10, 10))
        once = linalg.project_feasible(z)
        assert np.array_equal(linalg.project_feasible(once), once)

    def test_nearest_point(self):
        # no random feasible point gets closer than the projection
        rng = np.random.default_rng(12)
        z = rng.standard_normal((6, 6))
        proj = linalg.project_feasible(z)
        base = np.linalg.norm(proj - z)
        for _ in range(1000):
            y = np.abs(rng.standard_normal((6, 6)))
            np.fill_diagonal(y, 0.0)
            assert np.linalg.norm(y - z) >= base - 1e-12
