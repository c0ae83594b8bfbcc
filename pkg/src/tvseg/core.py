"""Domain types shared across the package and the segmentation objective.

The objective being minimized over a coefficient matrix Z and a cluster
indicator Q is

    |X - XZ|_F^2  +  |Z^T Z|_1  +  |ZG|_{2,1}  +  |Theta (.) Z|_1

where G encodes temporal neighborhoods and Theta_ij = |q_i - q_j|^2 / 2 is
the binary cluster-disagreement matrix.  Each term carries a configurable
nonnegative weight defaulting to 1.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError

# Entries with magnitude below this are treated as exact zeros when checking
# feasibility (diag(Z) = 0, Z >= 0) after projection.
ZERO_FLOOR = 1e-12


def _as_readonly(a):
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FeatureSequence:
    """A D x N data matrix whose columns are per-frame feature vectors."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise InvalidInputError(f"feature matrix must be 2-D, got {data.ndim}-D")
        d, n = data.shape
        if n < 2 or d < 1:
            raise InvalidInputError(f"need D >= 1 and N >= 2, got D={d}, N={n}")
        if not np.all(np.isfinite(data)):
            raise InvalidInputError("feature matrix contains non-finite entries")
        object.__setattr__(self, "data", _as_readonly(data))

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def frame_count(self) -> int:
        return self.data.shape[1]

    def normalized(self) -> "FeatureSequence":
        """Copy with unit-l2 columns; all-zero columns are left as zeros."""
        norms = np.linalg.norm(self.data, axis=0)
        safe = np.where(norms > 0.0, norms, 1.0)
        return FeatureSequence(self.data / safe)


@dataclass(frozen=True)
class SubspaceEmbedding:
    """Coefficient matrix Z with its splitting variable H, multiplier F and penalty."""

    z: np.ndarray
    h: np.ndarray
    f: np.ndarray
    gamma: float
    rho: float

    def __post_init__(self):
        z = np.asarray(self.z, dtype=float)
        n = z.shape[0]
        for name, m in (("z", z), ("h", np.asarray(self.h)), ("f", np.asarray(self.f))):
            if m.shape != (n, n):
                raise InvalidInputError(f"{name} must be {n}x{n}, got {m.shape}")
        if self.gamma <= 0:
            raise InvalidInputError("gamma must be strictly positive")
        if self.rho <= 1:
            raise InvalidInputError("rho must exceed 1")
        if np.abs(np.diagonal(z)).max(initial=0.0) > ZERO_FLOOR:
            raise InvalidInputError("diag(z) must be zero")
        if z.min(initial=0.0) < -ZERO_FLOOR:
            raise InvalidInputError("z must be nonnegative")


@dataclass(frozen=True)
class ClusterAssignment:
    """Hard cluster assignment: labels, one-hot indicator Q, spectral rows, centers."""

    labels: np.ndarray
    q: np.ndarray
    k: int
    u: np.ndarray | None = None
    centers: np.ndarray | None = None

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=int)
        q = np.asarray(self.q, dtype=float)
        n = labels.shape[0]
        if q.shape != (n, self.k):
            raise InvalidInputError(f"q must be {n}x{self.k}, got {q.shape}")
        if labels.min(initial=0) < 0 or labels.max(initial=0) >= self.k:
            raise InvalidInputError("labels out of range [0, k)")
        rows = np.zeros((n, self.k))
        rows[np.arange(n), labels] = 1.0
        if not np.array_equal(rows, q):
            raise InvalidInputError("q is not the one-hot encoding of labels")
        labels = np.array(labels, dtype=int)
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "q", _as_readonly(q))


@dataclass(frozen=True)
class ObjectiveBreakdown:
    """Per-term values of the objective at one iterate.

    ``total`` is the weighted sum of the four terms.  ``aug_lagrangian`` is
    the augmented value with the splitting variable: the l21 term is
    evaluated at H and the coupling <F, H - ZG> + (gamma/2)|H - ZG|_F^2 is
    added; it equals ``total`` whenever H = ZG exactly.
    """

    fit: float
    sparsity: float
    tvs: float
    cluster: float
    total: float
    aug_lagrangian: float

    def to_dict(self):
        return {
            "fit": self.fit,
            "sparsity": self.sparsity,
            "tvs": self.tvs,
            "cluster": self.cluster,
            "total": self.total,
            "aug_lagrangian": self.aug_lagrangian,
        }


@dataclass(frozen=True)
class SolverConfig:
    """Knobs for the alternating solver and cluster-count selection.

    The fit weight defaults to 30 rather than 1: with unit-norm columns the
    reconstruction term is O(1) per frame while the temporal penalty is
    amplified by the neighborhood size, and the healing guarantees require
    the temporal term not to overwhelm data fitting.  Raising the fit
    weight restores the balance that holds naturally for raw, large-norm
    features.
    """

    weight_fit: float = 30.0
    weight_sparse: float = 1.0
    weight_tvs: float = 1.0
    weight_cluster: float = 1.0
    gamma0: float = 0.1
    rho: float = 1.1
    max_outer: int = 50
    tol_rel_obj: float = 1e-6
    rng_seed: int = 0
    k_range: tuple[int, int] = (2, 10)
    normalize_columns: bool = True
    kmeans_max_rounds: int = 100
    # proximal weight of the Z step; keeps the stationary-point solve
    # bounded when the data matrix is rank deficient
    z_prox: float = 5.0
    # inner-splitting cap for the constrained Z subproblem
    z_inner_max: int = 400

    def __post_init__(self):
        for name in ("weight_fit", "weight_sparse", "weight_tvs", "weight_cluster"):
            if getattr(self, name) < 0:
                raise InvalidInputError(f"{name} must be nonnegative")
        if self.gamma0 <= 0:
            raise InvalidInputError("gamma0 must be positive")
        if self.rho <= 1:
            raise InvalidInputError("rho must exceed 1")
        if self.max_outer < 1:
            raise InvalidInputError("max_outer must be positive")
        if self.tol_rel_obj <= 0:
            raise InvalidInputError("tol_rel_obj must be positive")
        if self.z_prox < 0:
            raise InvalidInputError("z_prox must be nonnegative")
        lo, hi = self.k_range
        if lo < 2 or hi < lo:
            raise InvalidInputError("k_range must satisfy 2 <= lo <= hi")

    def with_(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


def l21_norm(m: np.ndarray) -> float:
    """Sum of the l2 norms of the columns of ``m``."""
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)):
        raise InvalidInputError("matrix contains non-finite entries")
    return float(np.linalg.norm(m, axis=0).sum())


def theta_from_assignment(q: np.ndarray) -> np.ndarray:
    """Binary disagreement matrix Theta_ij = |q_i - q_j|^2 / 2 from an indicator Q.

    Zero exactly where rows i and j carry the same label, one elsewhere;
    symmetric with zero diagonal.
    """
    q = np.asarray(q, dtype=float)
    if q.ndim != 2:
        raise InvalidInputError("q must be a 2-D indicator matrix")
    if not np.all((q == 0.0) | (q == 1.0)) or not np.all(q.sum(axis=1) == 1.0):
        raise InvalidInputError("q rows must be one-hot (binary, summing to 1)")
    labels = np.argmax(q, axis=1)
    return (labels[:, None] != labels[None, :]).astype(float)


def objective(
    x: FeatureSequence | np.ndarray,
    z: np.ndarray,
    g: np.ndarray,
    q: np.ndarray,
    cfg: SolverConfig | None = None,
    *,
    h: np.ndarray | None = None,
    f: np.ndarray | None = None,
    gamma: float | None = None,
) -> ObjectiveBreakdown:
    """Evaluate every term of the objective at (Z, Q).

    When ``h``, ``f`` and ``gamma`` are given, ``aug_lagrangian`` is the
    augmented value used by the solver; otherwise H = ZG is assumed and the
    augmented value coincides with ``total``.
    """
    cfg = cfg or SolverConfig()
    data = x.data if isinstance(x, FeatureSequence) else np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    g = np.asarray(g, dtype=float)
    n = data.shape[1]
    if z.shape != (n, n) or g.shape != (n, n):
        raise InvalidInputError(
            f"z and g must be {n}x{n}, got {z.shape} and {g.shape}"
        )
    if np.asarray(q).shape[0] != n:
        raise InvalidInputError(f"q must have {n} rows")

    theta = theta_from_assignment(q)
    fit = float(np.linalg.norm(data - data @ z) ** 2)
    sparsity = float(np.abs(z.T @ z).sum())
    tvs = l21_norm(z @ g)
    cluster = float(np.abs(theta * z).sum())
    total = (
        cfg.weight_fit * fit
        + cfg.weight_sparse * sparsity
        + cfg.weight_tvs * tvs
        + cfg.weight_cluster * cluster
    )
    if h is None:
        aug = total
    else:
        h = np.asarray(h, dtype=float)
        f = np.asarray(f, dtype=float)
        gap = h - z @ g
        aug = (
            cfg.weight_fit * fit
            + cfg.weight_sparse * sparsity
            + cfg.weight_tvs * l21_norm(h)
            + cfg.weight_cluster * cluster
            + float(np.sum(f * gap))
            + 0.5 * float(gamma) * float(np.linalg.norm(gap) ** 2)
        )
    return ObjectiveBreakdown(
        fit=fit, sparsity=sparsity, tvs=tvs, cluster=cluster, total=total,
        aug_lagrangian=aug,
    )
