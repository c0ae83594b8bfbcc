"""Grouping of the subspace embedding: spectral relaxation plus a
temporally weighted k-means.

The cluster term of the objective equals Trace(Q^T (D - W) Q) over the
symmetrized affinity W = (|Z| + |Z^T|)/2, so the assignment subproblem is a
normalized-cut relaxation: embed the frames with the smallest eigenvectors
of L = I - D^{-1/2} W D^{-1/2}, then cluster the rows with a k-means whose
per-point weights fold in how often a frame appears in the temporal
neighborhood of each cluster's members.
"""

from __future__ import annotations

import logging
from typing import Callable, NamedTuple

import numpy as np

from . import linalg
from .errors import InvalidInputError, SelectionError

logger = logging.getLogger(__name__)


class Laplacian(NamedTuple):
    w: np.ndarray        # symmetrized nonnegative affinity
    degrees: np.ndarray  # row sums of w
    l: np.ndarray        # normalized Laplacian, symmetric


def normalized_laplacian(z: np.ndarray) -> Laplacian:
    """Symmetrized affinity, degree vector and normalized Laplacian of Z.

    Zero-degree frames get D_ii^{-1/2} = 0, leaving L_ii = 1 for them.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[0] != z.shape[1]:
        raise InvalidInputError(f"z must be square, got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("z contains non-finite entries")
    w = (np.abs(z) + np.abs(z.T)) / 2.0
    degrees = w.sum(axis=1)
    inv_sqrt = np.where(degrees > 0.0, 1.0 / np.sqrt(np.where(degrees > 0, degrees, 1.0)), 0.0)
    lap = np.eye(z.shape[0]) - (inv_sqrt[:, None] * w) * inv_sqrt[None, :]
    lap = (lap + lap.T) / 2.0
    return Laplacian(w=w, degrees=degrees, l=lap)


def spectral_embed(lap: np.ndarray, k: int) -> np.ndarray:
    """Rows of the K smallest eigenvectors of the Laplacian."""
    lap = np.asarray(lap, dtype=float)
    n = lap.shape[0]
    if not 2 <= k <= n:
        raise InvalidInputError(f"k={k} out of range [2, {n}]")
    _, vectors = linalg.smallest_eigvecs(lap, k)
    return vectors


def _neighbor_incidence(neighborhoods, n):
    """m[j, i] = 1 iff frame i is a neighbor of frame j."""
    m = np.zeros((n, n))
    for j, nbrs in enumerate(neighborhoods):
        nbrs = np.asarray(nbrs, dtype=int)
        if nbrs.size:
            m[j, nbrs] = 1.0
    return m


def _eta(neighborhoods):
    sizes = np.array([len(nbrs) for nbrs in neighborhoods], dtype=float)
    return np.where(sizes > 0, 1.0 / np.where(sizes > 0, sizes, 1.0), 0.0)


def kmeans_weights(labels, neighborhoods, k, incidence=None, eta=None):
    """Per-(cluster, frame) weights: membership plus scaled neighbor counts.

    w[k, i] = 1(i in C_k) + sum_{j in C_k, i in N_j} eta_j.  With
    run-structured neighborhoods every j with i in N_j shares eta_j = eta_i,
    so this reduces to 1(i in C_k) + eta_i * n_k(i).
    """
    labels = np.asarray(labels, dtype=int)
    n = labels.size
    if incidence is None:
        incidence = _neighbor_incidence(neighborhoods, n)
    if eta is None:
        eta = _eta(neighborhoods)
    onehot = np.zeros((k, n))
    onehot[labels, np.arange(n)] = 1.0
    return onehot + onehot @ (eta[:, None] * incidence)


def temporal_objective(u, neighborhoods, labels, centers, eta=None):
    """Value of the neighbor-augmented k-means objective.

    sum_k sum_{i in C_k} ( |u_i - mu_k|^2 + eta_i * sum_{j in N_i} |u_j - mu_k|^2 )
    """
    u = np.asarray(u, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if eta is None:
        eta = _eta(neighborhoods)
    total = 0.0
    for i, k in enumerate(labels):
        mu = centers[k]
        total += float(np.sum((u[i] - mu) ** 2))
        nbrs = np.asarray(neighborhoods[i], dtype=int)
        if nbrs.size:
            total += eta[i] * float(np.sum((u[nbrs] - mu[None, :]) ** 2))
    return total


def _farthest_point_init(u, k, rng):
    n = u.shape[0]
    centers = np.empty((k, u.shape[1]))
    first = int(rng.integers(n))
    centers[0] = u[first]
    dist = np.sum((u - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        centers[j] = u[int(np.argmax(dist))]
        dist = np.minimum(dist, np.sum((u - centers[j]) ** 2, axis=1))
    return centers


def temporal_kmeans(u, neighborhoods, k, rng_seed=0, max_rounds=100):
    """Weighted k-means over the spectral rows with temporal neighbor weights.

    Alternates the weighted center update with the weighted assignment,
    computing the weights once per round from the partition at the round's
    start.  Rounds that would increase the neighbor-augmented objective are
    rolled back and the loop stops, so the returned value is nonincreasing
    across rounds.  Deterministic for a fixed seed.
    """
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise InvalidInputError("embedding rows contain non-finite entries")
    n = u.shape[0]
    if k < 2:
        raise InvalidInputError("k must be at least 2")
    if len(neighborhoods) != n:
        raise InvalidInputError(f"need {n} neighborhoods, got {len(neighborhoods)}")

    rng = np.random.default_rng(rng_seed)
    incidence = _neighbor_incidence(neighborhoods, n)
    eta = _eta(neighborhoods)
    centers = _farthest_point_init(u, k, rng)
    dists = np.sum((u[None, :, :] - centers[:, None, :]) ** 2, axis=2)
    labels = np.argmin(dists, axis=0)

    best_obj = temporal_objective(u, neighborhoods, labels, centers, eta)
    for _ in range(max_rounds):
        weights = kmeans_weights(labels, neighborhoods, k, incidence, eta)

        mass = weights.sum(axis=1)
        new_centers = centers.copy()
        nonzero = mass > 0
        new_centers[nonzero] = (weights[nonzero] @ u) / mass[nonzero, None]
        for j in np.flatnonzero(~nonzero):
            # empty cluster: restart its center at the frame with the worst
            # weighted residual under the current assignment
            resid = np.sum((u - new_centers[labels]) ** 2, axis=1)
            resid *= weights[labels, np.arange(n)]
            worst = int(np.argmax(resid))
            new_centers[j] = u[worst]
            logger.debug("reseeded empty cluster %d at frame %d", j, worst)

        dists = np.sum((u[None, :, :] - new_centers[:, None, :]) ** 2, axis=2)
        cost = dists * weights
        cost[weights <= 0.0] = np.inf
        new_labels = np.argmin(cost, axis=0)
        all_zero = ~np.isfinite(cost).any(axis=0)
        new_labels[all_zero] = labels[all_zero]

        new_obj = temporal_objective(u, neighborhoods, new_labels, new_centers, eta)
        if new_obj > best_obj + 1e-12 * max(1.0, abs(best_obj)):
            break
        converged = np.array_equal(new_labels, labels)
        labels, centers, best_obj = new_labels, new_centers, new_obj
        if converged:
            break
    return labels, centers


def silhouette_score(u, labels) -> float:
    """Mean silhouette (b - a) / max(a, b) over rows with Euclidean distance."""
    u = np.asarray(u, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n = u.shape[0]
    present = np.unique(labels)
    if present.size < 2:
        raise InvalidInputError("silhouette needs at least two populated clusters")
    diff = u[:, None, :] - u[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=2))
    scores = np.zeros(n)
    for i in range(n):
        own = labels == labels[i]
        own_size = int(own.sum())
        if own_size <= 1:
            scores[i] = 0.0
            continue
        a = dist[i, own].sum() / (own_size - 1)
        b = min(
            dist[i, labels == c].mean() for c in present if c != labels[i]
        )
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0.0 else (b - a) / denom
    return float(scores.mean())


def select_k(
    u_builder: Callable[[int], np.ndarray],
    neighborhoods,
    k_range: tuple[int, int],
    rng_seed: int = 0,
) -> int:
    """Pick the cluster count maximizing the mean silhouette of its own embedding.

    Each candidate K gets its own embedding (the eigenvector matrix depends
    on K) and a derived seed; ties break toward the smaller K.
    """
    lo, hi = k_range
    if lo < 2:
        raise InvalidInputError("k_range lower bound must be at least 2")
    best_k, best_score = None, -np.inf
    for k in range(lo, hi + 1):
        u = u_builder(k)
        if k > u.shape[0] - 1:
            break
        seed = np.random.SeedSequence((rng_seed, k)).generate_state(1)[0]
        labels, _ = temporal_kmeans(u, neighborhoods, k, rng_seed=seed)
        if np.unique(labels).size < 2:
            continue
        score = silhouette_score(u, labels)
        if score > best_score + 1e-12:
            best_k, best_score = k, score
    if best_k is None:
        raise SelectionError("every candidate cluster count was degenerate")
    return best_k


def q_from_labels(labels, k: int) -> np.ndarray:
    """One-hot indicator matrix from a label vector."""
    labels = np.asarray(labels, dtype=int)
    if labels.min(initial=0) < 0 or (labels.size and labels.max() >= k):
        raise InvalidInputError(f"labels must lie in [0, {k})")
    q = np.zeros((labels.size, k))
    q[np.arange(labels.size), labels] = 1.0
    return q


def neighbor_disagreement(labels, neighborhoods) -> float:
    """Fraction of unordered neighbor pairs whose labels differ.

    The hard constraint that neighbors share a label is relaxed in the
    solver; this reports how far a labeling is from satisfying it.
    """
    labels = np.asarray(labels, dtype=int)
    total = 0
    differing = 0
    for i, nbrs in enumerate(neighborhoods):
        for j in np.asarray(nbrs, dtype=int):
            if j > i:
                total += 1
                if labels[i] != labels[j]:
                    differing += 1
    return 0.0 if total == 0 else differing / total
