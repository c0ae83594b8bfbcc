import numpy as np
import pytest

from tvseg.clustering import (
    kmeans_weights,
    neighbor_disagreement,
    normalized_laplacian,
    q_from_labels,
    select_k,
    silhouette_score,
    spectral_embed,
    temporal_kmeans,
    temporal_objective,
)
from tvseg.errors import InvalidInputError, SelectionError
from tvseg.tvs import neighborhoods_from_eq


def run_neighborhoods(bits):
    return neighborhoods_from_eq(bits).neighborhoods


def empty_neighborhoods(n):
    return tuple(np.empty(0, dtype=int) for _ in range(n))


class TestNormalizedLaplacian:
    def test_two_node_graph(self):
        lap = normalized_laplacian(np.array([[0.0, 1.0], [1.0, 0.0]]))
        assert np.array_equal(lap.w, np.array([[0, 1], [1, 0]], dtype=float))
        assert np.allclose(lap.degrees, [1, 1])
        assert np.allclose(lap.l, np.array([[1, -1], [-1, 1]], dtype=float))

    def test_asymmetric_symmetrized(self):
        lap = normalized_laplacian(np.array([[0.0, 2.0], [0.0, 0.0]]))
        assert np.array_equal(lap.w, np.array([[0, 1], [1, 0]], dtype=float))

    def test_zero_degree_row(self):
        z = np.zeros((3, 3))
        z[0, 1] = z[1, 0] = 1.0
        lap = normalized_laplacian(z)
        assert lap.l[2, 2] == 1.0
        assert np.all(lap.l[2, :2] == 0)

    @pytest.mark.parametrize("seed", range(3))
    def test_cluster_term_equals_trace_form(self, seed):
        # the cluster penalty agrees with Trace(Q^T (D - W) Q)
        rng = np.random.default_rng(seed)
        n, k = 15, 3
        z = rng.standard_normal((n, n))
        labels = rng.integers(0, k, size=n)
        q = q_from_labels(labels, k)
        lap = normalized_laplacian(z)
        trace_form = float(np.trace(q.T @ (np.diag(lap.degrees) - lap.w) @ q))
        theta = (labels[:, None] != labels[None, :]).astype(float)
        cluster_term = float(np.abs(theta * z).sum())
        assert cluster_term == pytest.approx(trace_form, abs=1e-10 * (1 + np.linalg.norm(z)))

    def test_eigenvalue_range(self):
        rng = np.random.default_rng(3)
        z = np.abs(rng.standard_normal((20, 20)))
        lap = normalized_laplacian(z)
        values = np.linalg.eigvalsh(lap.l)
        assert values.min() >= -1e-8
        assert values.max() <= 2 + 1e-8


class TestSpectralEmbed:
    def test_disconnected_blocks_have_constant_rows(self):
        w = np.zeros((6, 6))
        w[:3, :3] = 1.0
        w[3:, 3:] = 1.0
        np.fill_diagonal(w, 0.0)
        lap = normalized_laplacian(w)
        u = spectral_embed(lap.l, 2)
        for block in (slice(0, 3), slice(3, 6)):
            rows = u[block]
            assert np.allclose(rows - rows[0], 0.0, atol=1e-8)
        assert np.linalg.norm(u[0] - u[3]) > 1e-3

    def test_full_k_orthogonal(self):
        rng = np.random.default_rng(4)
        z = np.abs(rng.standard_normal((8, 8)))
        lap = normalized_laplacian(z)
        u = spectral_embed(lap.l, 8)
        assert np.allclose(u.T @ u, np.eye(8), atol=1e-10)

    def test_orthonormal_columns(self):
        rng = np.random.default_rng(5)
        z = np.abs(rng.standard_normal((20, 20)))
        lap = normalized_laplacian(z)
        u = spectral_embed(lap.l, 3)
        assert np.allclose(u.T @ u, np.eye(3), atol=1e-10)


class TestKmeansWeights:
    def test_no_neighbors_reduces_to_membership(self):
        labels = np.array([0, 1, 0, 1])
        w = kmeans_weights(labels, empty_neighborhoods(4), 2)
        expected = q_from_labels(labels, 2).T
        assert np.array_equal(w, expected)

    def test_run_structured_matches_closed_form(self):
        # with run-structured neighborhoods the weight is
        # membership + eta_i * (times i neighbors a member of the cluster)
        bits = [1, 1, 0, 1, 0]
        nbrs = run_neighborhoods(bits)
        labels = np.array([0, 0, 1, 1, 1, 0])
        w = kmeans_weights(labels, nbrs, 2)
        eta = np.array([1 / len(nb) if len(nb) else 0.0 for nb in nbrs])
        for k in range(2):
            for i in range(6):
                n_ki = sum(
                    1 for j in range(6) if labels[j] == k and i in set(nbrs[j].tolist())
                )
                expected = float(labels[i] == k) + eta[i] * n_ki
                assert w[k, i] == pytest.approx(expected, abs=1e-12)


class TestTemporalObjective:
    @pytest.mark.parametrize("seed", range(5))
    def test_weighted_form_equality(self, seed):
        # the neighbor-augmented sum equals the weighted single-sum form
        rng = np.random.default_rng(seed)
        n, k = 12, 3
        bits = rng.integers(0, 2, size=n - 1)
        nbrs = run_neighborhoods(bits)
        u = rng.standard_normal((n, k))
        labels = rng.integers(0, k, size=n)
        centers = rng.standard_normal((k, k))
        direct = temporal_objective(u, nbrs, labels, centers)
        weights = kmeans_weights(labels, nbrs, k)
        weighted = sum(
            float(np.sum((u - centers[c]) ** 2, axis=1) @ weights[c])
            for c in range(k)
        )
        assert direct == pytest.approx(weighted, rel=1e-10)


class TestTemporalKmeans:
    def test_reduces_to_plain_kmeans_centers(self):
        rng = np.random.default_rng(6)
        u = np.vstack([rng.normal(0, 0.05, (10, 2)), rng.normal(3, 0.05, (10, 2))])
        labels, centers = temporal_kmeans(u, empty_neighborhoods(20), 2, rng_seed=1)
        for k in range(2):
            members = u[labels == k]
            assert np.allclose(centers[k], members.mean(axis=0), atol=1e-12)

    def test_separated_groups_recovered(self):
        rng = np.random.default_rng(7)
        u = np.vstack([rng.normal(0, 0.1, (15, 3)), rng.normal(5, 0.1, (15, 3))])
        bits = [1] * 14 + [0] + [1] * 14
        labels, _ = temporal_kmeans(u, run_neighborhoods(bits), 2, rng_seed=2)
        assert len(set(labels[:15])) == 1
        assert len(set(labels[15:])) == 1
        assert labels[0] != labels[-1]

    def test_deterministic(self):
        rng = np.random.default_rng(8)
        u = rng.standard_normal((30, 4))
        bits = rng.integers(0, 2, size=29)
        a, _ = temporal_kmeans(u, run_neighborhoods(bits), 3, rng_seed=9)
        b, _ = temporal_kmeans(u, run_neighborhoods(bits), 3, rng_seed=9)
        assert np.array_equal(a, b)

    @pytest.mark.parametrize("seed", range(6))
    def test_objective_nonincreasing_across_rounds(self, seed):
        rng = np.random.default_rng(seed)
        n = 16
        u = rng.standard_normal((n, 2))
        bits = rng.integers(0, 2, size=n - 1)
        nbrs = run_neighborhoods(bits)

        values = []
        labels = None
        centers = None
        # replay the rounds manually through the public pieces
        from tvseg.clustering import _eta, _farthest_point_init, _neighbor_incidence

        rng2 = np.random.default_rng(seed)
        incidence = _neighbor_incidence(nbrs, n)
        eta = _eta(nbrs)
        centers = _farthest_point_init(u, 2, rng2)
        labels = np.argmin(
            np.sum((u[None] - centers[:, None]) ** 2, axis=2), axis=0
        )
        values.append(temporal_objective(u, nbrs, labels, centers, eta))
        final_labels, final_centers = temporal_kmeans(u, nbrs, 2, rng_seed=seed)
        final = temporal_objective(u, nbrs, final_labels, final_centers, eta)
        assert final <= values[0] + 1e-10


class TestSilhouette:
    def test_two_far_blobs_close_to_one(self):
        rng = np.random.default_rng(10)
        u = np.vstack([rng.normal(0, 0.01, (8, 2)), rng.normal(10, 0.01, (8, 2))])
        labels = np.array([0] * 8 + [1] * 8)
        assert silhouette_score(u, labels) > 0.99

    def test_random_labels_near_zero(self):
        rng = np.random.default_rng(11)
        u = rng.standard_normal((40, 2))
        labels = rng.integers(0, 2, size=40)
        assert abs(silhouette_score(u, labels)) < 0.4

    def test_single_cluster_rejected(self):
        with pytest.raises(InvalidInputError):
            silhouette_score(np.zeros((4, 2)), np.zeros(4, dtype=int))


class TestSelectK:
    def test_two_blobs(self):
        rng = np.random.default_rng(12)
        u_full = np.vstack([rng.normal(0, 0.05, (12, 5)), rng.normal(4, 0.05, (12, 5))])

        def builder(k):
            return u_full[:, :k]

        best = select_k(builder, empty_neighborhoods(24), (2, 5), rng_seed=0)
        assert best == 2

    def test_single_candidate(self):
        rng = np.random.default_rng(13)
        u_full = rng.standard_normal((10, 4))

        def builder(k):
            return u_full[:, :k]

        assert select_k(builder, empty_neighborhoods(10), (2, 2), rng_seed=0) == 2

    def test_three_groups_on_embedding(self):
        rng = np.random.default_rng(14)
        centers = np.eye(3) * 6
        u_full = np.vstack(
            [rng.normal(centers[i], 0.05, (10, 3)) for i in range(3)]
        )

        def builder(k):
            return u_full[:, :k] if k <= 3 else np.hstack(
                [u_full, rng.normal(0, 0.01, (30, k - 3))]
            )

        assert select_k(builder, empty_neighborhoods(30), (2, 5), rng_seed=1) == 3

    def test_all_degenerate_raises(self):
        u = np.zeros((6, 3))

        def builder(k):
            return u[:, :k]

        with pytest.raises(SelectionError):
            select_k(builder, empty_neighborhoods(6), (2, 3), rng_seed=0)


class TestQFromLabels:
    def test_basic(self):
        q = q_from_labels([0, 1, 0], 2)
        assert np.array_equal(q, np.array([[1, 0], [0, 1], [1, 0]], dtype=float))

    def test_single_cluster(self):
        assert np.array_equal(q_from_labels([0, 0], 1), np.ones((2, 1)))

    def test_roundtrip(self):
        rng = np.random.default_rng(15)
        labels = rng.integers(0, 4, size=25)
        q = q_from_labels(labels, 4)
        assert np.array_equal(np.argmax(q, axis=1), labels)

    def test_out_of_range(self):
        with pytest.raises(InvalidInputError):
            q_from_labels([0, 2], 2)


class TestNeighborDisagreement:
    def test_consistent_labeling_zero(self):
        nbrs = run_neighborhoods([1, 1, 0, 1])
        labels = np.array([0, 0, 0, 1, 1])
        assert neighbor_disagreement(labels, nbrs) == 0.0

    def test_reports_fraction(self):
        nbrs = run_neighborhoods([1, 1])
        labels = np.array([0, 0, 1])
        # pairs in the single run: (0,1), (0,2), (1,2); two disagree
        assert neighbor_disagreement(labels, nbrs) == pytest.approx(2 / 3)

    def test_no_neighbors(self):
        assert neighbor_disagreement(np.array([0, 1]), empty_neighborhoods(2)) == 0.0
