"""Synthetic temporal sequences drawn from a union of linear subspaces.

Each segment g draws its frames as B_g c + noise, with B_g an orthonormal
basis, c uniform on [-1, 1]^d and isotropic Gaussian noise.  Segment
boundaries are exactly the zero bits of the returned adjacency sequence.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError
from .tvs import AdjacencySequence


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of one synthetic sequence."""

    n_frames: int
    n_segments: int
    ambient_dim: int
    subspace_dim: int
    min_segment_len: int
    noise_std: float
    orthogonal: bool = True
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_segments < 1 or self.n_frames < 2:
            raise InvalidInputError("need at least one segment and two frames")
        if self.n_segments * self.min_segment_len > self.n_frames:
            raise InvalidInputError("segments at min length exceed the frame budget")
        if self.subspace_dim < 1 or self.ambient_dim < 1:
            raise InvalidInputError("dimensions must be positive")
        if self.orthogonal and self.subspace_dim * self.n_segments > self.ambient_dim:
            raise InvalidInputError(
                "orthogonal bases need d * K <= D "
                f"({self.subspace_dim} * {self.n_segments} > {self.ambient_dim})"
            )
        if self.noise_std < 0:
            raise InvalidInputError("noise std must be nonnegative")

    def with_(self, **changes) -> "SyntheticSpec":
        return replace(self, **changes)


# N=300 frames across 4 mutually orthogonal 3-d subspaces in R^30,
# segments of at least 50 frames, light noise.
PRESETS = {
    "S1": SyntheticSpec(
        n_frames=300, n_segments=4, ambient_dim=30, subspace_dim=3,
        min_segment_len=50, noise_std=0.01, orthogonal=True,
    ),
}


@dataclass(frozen=True)
class GeneratedSequence:
    """A generated instance with its ground truth."""

    x: np.ndarray               # D x N feature matrix
    labels: np.ndarray          # length-N segment indices
    eq_true: AdjacencySequence  # zero exactly at segment boundaries
    bases: tuple                # per-segment D x d orthonormal bases
    segment_lengths: np.ndarray


def _segment_lengths(spec, rng):
    base = np.full(spec.n_segments, spec.min_segment_len, dtype=int)
    spare = spec.n_frames - base.sum()
    if spare > 0:
        base += rng.multinomial(spare, np.full(spec.n_segments, 1.0 / spec.n_segments))
    return base


def _bases(spec, rng):
    d, k, dim = spec.ambient_dim, spec.n_segments, spec.subspace_dim
    if spec.orthogonal:
        joint, _ = np.linalg.qr(rng.standard_normal((d, k * dim)))
        return tuple(joint[:, g * dim : (g + 1) * dim] for g in range(k))
    return tuple(np.linalg.qr(rng.standard_normal((d, dim)))[0] for _ in range(k))


def generate(spec: SyntheticSpec) -> GeneratedSequence:
    """Draw one sequence; deterministic for a fixed ``spec.rng_seed``."""
    rng = np.random.default_rng(spec.rng_seed)
    lengths = _segment_lengths(spec, rng)
    bases = _bases(spec, rng)

    columns = []
    labels = []
    for g, length in enumerate(lengths):
        coeffs = rng.uniform(-1.0, 1.0, size=(spec.subspace_dim, length))
        block = bases[g] @ coeffs
        if spec.noise_std > 0:
            block = block + spec.noise_std * rng.standard_normal(block.shape)
        columns.append(block)
        labels.extend([g] * length)
    x = np.concatenate(columns, axis=1)
    labels = np.asarray(labels, dtype=int)
    eq = (labels[:-1] == labels[1:]).astype(int)
    return GeneratedSequence(
        x=x,
        labels=labels,
        eq_true=AdjacencySequence(eq=eq),
        bases=bases,
        segment_lengths=lengths,
    )


def separation(instance: GeneratedSequence) -> float:
    """Smallest squared subspace separation over segment pairs.

    Measured through the largest principal-angle cosine:
    1 - sigma_max(B_g^T B_h)^2, minimized over g != h.  Equals 1 for
    pairwise-orthogonal bases and 0 when two segments share a subspace.
    """
    bases = instance.bases
    if len(bases) < 2:
        return float("inf")
    best = np.inf
    for g in range(len(bases)):
        for h in range(g + 1, len(bases)):
            smax = np.linalg.svd(bases[g].T @ bases[h], compute_uv=False)[0]
            best = min(best, 1.0 - float(smax) ** 2)
    return float(best)
