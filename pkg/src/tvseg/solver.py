"""Alternating solver for the joint subspace-embedding / clustering problem.

One outer iteration updates, in order: the coefficient matrix Z (exact
minimization of its subproblem over {diag = 0, Z >= 0}, where the cluster
penalty is linear, via repeated Sylvester solves interleaved with the
feasible-set projection), the splitting variable H (columnwise group
shrinkage, the exact proximal step), the multiplier F and penalty gamma,
and finally the cluster assignment Q (spectral embedding plus temporally
weighted k-means).  The loop stops when the augmented objective stalls or
the iteration cap is reached.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import clustering, linalg
from .core import (
    FeatureSequence,
    ObjectiveBreakdown,
    SolverConfig,
    objective,
    theta_from_assignment,
)
from .errors import DivergenceError, InvalidInputError


@dataclass
class SolverState:
    """Mutable state of one run; owned exclusively by that run."""

    x: np.ndarray
    g: np.ndarray
    neighborhoods: tuple
    z: np.ndarray
    h: np.ndarray
    f: np.ndarray
    gamma: float
    k: int
    labels: np.ndarray
    q: np.ndarray
    theta: np.ndarray
    cfg: SolverConfig
    trace: list = field(default_factory=list)
    primal_residuals: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    # cached spectral data and warm-started inner dual for the Z step
    a_eig: tuple | None = None
    qp_dual: np.ndarray | None = None


@dataclass(frozen=True)
class SegmentationReport:
    """Everything a run produces: labels, per-iteration trace, diagnostics."""

    labels: np.ndarray
    k: int
    trace: tuple
    primal_residuals: tuple
    iterations: int
    converged: bool
    neighbor_disagreement: float
    final: ObjectiveBreakdown
    flags: tuple = ()

    def to_dict(self):
        return {
            "labels": self.labels.tolist(),
            "k": self.k,
            "iterations": self.iterations,
            "converged": self.converged,
            "neighbor_disagreement": self.neighbor_disagreement,
            "final": self.final.to_dict(),
            "trace": [b.to_dict() for b in self.trace],
            "primal_residuals": list(self.primal_residuals),
            "flags": list(self.flags),
        }


def initial_embedding(x: np.ndarray) -> np.ndarray:
    """Feasible starting Z: clamped cosine similarities, rows scaled to unit sum."""
    norms = np.linalg.norm(x, axis=0)
    safe = np.where(norms > 0.0, norms, 1.0)
    xn = x / safe
    z = xn.T @ xn
    z = np.where(z < 0.0, 0.0, z)
    np.fill_diagonal(z, 0.0)
    row_sums = z.sum(axis=1, keepdims=True)
    row_sums = np.where(row_sums > 0.0, row_sums, 1.0)
    return z / row_sums


def solve_z_system(x, z_prev, h, f, gamma, g, theta, cfg, prox_weight=None):
    """Stationarity system of the Z subproblem, solved as a Sylvester equation.

    The cluster penalty's subgradient is frozen at the previous iterate
    (sign(0) = 0), which makes the update a linear solve:

        (2 wf X^T X) Z + Z (2 ws E + gamma G G^T)
            = F G^T + gamma H G^T + 2 wf X^T X - wc Theta (.) sign(Theta (.) Z_prev)

    With ``prox_weight`` mu > 0 the subproblem gains (mu/2) |Z - Z_prev|_F^2,
    splitting mu/2 onto each coefficient matrix and mu Z_prev onto the right
    side.  Rank-deficient data leaves both coefficient matrices positive
    semidefinite with noise-floor spectra, along which the unregularized
    stationary point can run arbitrarily far; the proximal term bounds the
    step without moving the scheme's fixed points.  Near-null directions
    that remain are dropped (minimum-norm solve).
    """
    n = x.shape[1]
    mu = cfg.z_prox if prox_weight is None else prox_weight
    a = 2.0 * cfg.weight_fit * (x.T @ x)
    ggt = g @ g.T
    b = 2.0 * cfg.weight_sparse * np.ones((n, n)) + gamma * ggt
    sign_term = theta * np.sign(theta * z_prev)
    c = f @ g.T + gamma * (h @ g.T) + a - cfg.weight_cluster * sign_term
    if mu > 0.0:
        half = 0.5 * mu * np.eye(n)
        a = a + half
        b = b + half
        c = c + mu * z_prev
    return linalg.solve_sylvester(a, b, c, drop_singular=True)


def _cone_qp(a_eig, b_eig, c_lin, y0, u0, max_inner, tol_rel=1e-10):
    """Minimize  (1/2) <Z, A Z + Z B> - <C, Z>  over {diag = 0, Z >= 0}.

    Splitting scheme whose quadratic step is an exact (shifted) Sylvester
    solve in the cached eigenbases and whose other step is the feasible-set
    projection; over-relaxed, warm-startable through ``y0`` / ``u0``.
    Returns the feasible iterate and the final scaled dual variable.
    """
    alpha, qa = a_eig
    beta, qb = b_eig
    eta = 2.5 * float(np.sqrt(alpha.max() + beta.max()))
    denom = alpha[:, None] + beta[None, :] + eta
    relax = 1.7
    y = y0
    u = np.zeros_like(y0) if u0 is None else u0
    n = y0.shape[0]
    tol = tol_rel * n
    for _ in range(max_inner):
        rhs = c_lin + eta * (y - u)
        z = qa @ ((qa.T @ rhs @ qb) / denom) @ qb.T
        zr = relax * z + (1.0 - relax) * y
        y_new = linalg.project_feasible(zr + u)
        u = u + zr - y_new
        primal = float(np.linalg.norm(z - y_new))
        dual = eta * float(np.linalg.norm(y_new - y))
        y = y_new
        if primal <= tol * max(1.0, float(np.linalg.norm(y))) and dual <= tol * max(
            1.0, eta
        ):
            break
    return y, u


def z_update(state: SolverState, iteration: int = 0, tol_rel: float = 1e-8) -> np.ndarray:
    """Exact minimizer of the Z subproblem over the feasible set.

    On the cone the cluster penalty is linear (all entries are
    nonnegative), so the subproblem is a convex QP; it is solved by
    alternating exact Sylvester solves with the feasible-set projection
    until both agree.  A proximal term (``cfg.z_prox``) centered at the
    previous iterate bounds the step along the data's noise-floor
    directions without moving the scheme's fixed points.
    """
    cfg = state.cfg
    n = state.x.shape[1]
    mu = cfg.z_prox
    xtx2 = 2.0 * cfg.weight_fit * (state.x.T @ state.x)
    if state.a_eig is None:
        state.a_eig = np.linalg.eigh(xtx2 + 0.5 * mu * np.eye(n))
    b = (
        2.0 * cfg.weight_sparse * np.ones((n, n))
        + state.gamma * (state.g @ state.g.T)
        + 0.5 * mu * np.eye(n)
    )
    b_eig = np.linalg.eigh(b)
    c_lin = (
        state.f @ state.g.T
        + state.gamma * (state.h @ state.g.T)
        + xtx2
        - cfg.weight_cluster * state.theta
        + mu * state.z
    )
    z, state.qp_dual = _cone_qp(
        state.a_eig, b_eig, c_lin, state.z, state.qp_dual, cfg.z_inner_max,
        tol_rel=tol_rel,
    )
    return z


def h_update(zg: np.ndarray, f: np.ndarray, gamma: float, weight_tvs: float = 1.0) -> np.ndarray:
    """Columnwise group shrinkage: the exact minimizer of the H subproblem.

    With P = ZG - F / gamma, each column is scaled by
    max(1 - wt / (gamma |p_i|), 0); columns at or below the radius collapse
    to zero.
    """
    if gamma <= 0:
        raise InvalidInputError("gamma must be positive")
    p = zg - f / gamma
    norms = np.linalg.norm(p, axis=0)
    radius = weight_tvs / gamma
    scale = np.where(norms > radius, 1.0 - radius / np.where(norms > 0, norms, 1.0), 0.0)
    return p * scale[None, :]


def dual_update(f, gamma, h, zg, rho):
    """Multiplier ascent and penalty growth: F += gamma (H - ZG), gamma *= rho."""
    if rho <= 1:
        raise InvalidInputError("rho must exceed 1")
    return f + gamma * (h - zg), gamma * rho


def q_update(state: SolverState):
    """Spectral embedding of the current Z, then temporally weighted k-means."""
    lap = clustering.normalized_laplacian(state.z)
    u = clustering.spectral_embed(lap.l, state.k)
    labels, _ = clustering.temporal_kmeans(
        u, state.neighborhoods, state.k,
        rng_seed=state.cfg.rng_seed, max_rounds=state.cfg.kmeans_max_rounds,
    )
    q = clustering.q_from_labels(labels, state.k)
    return labels, q, theta_from_assignment(q)


def _initialize(x, g, cfg):
    neighborhoods = tvs_neighborhoods(g)
    z0 = initial_embedding(x)
    lap = clustering.normalized_laplacian(z0)

    def builder(k):
        return clustering.spectral_embed(lap.l, k)

    lo, hi = cfg.k_range
    if lo == hi:
        k = lo
    else:
        # plain k-means for the initial sweep: no neighbor weighting yet
        empty = tuple(np.empty(0, dtype=int) for _ in range(x.shape[1]))
        k = clustering.select_k(builder, empty, cfg.k_range, rng_seed=cfg.rng_seed)

    u0 = builder(k)
    empty = tuple(np.empty(0, dtype=int) for _ in range(x.shape[1]))
    labels0, _ = clustering.temporal_kmeans(
        u0, empty, k, rng_seed=cfg.rng_seed, max_rounds=cfg.kmeans_max_rounds
    )
    q0 = clustering.q_from_labels(labels0, k)
    return SolverState(
        x=x,
        g=np.asarray(g, dtype=float),
        neighborhoods=neighborhoods,
        z=z0,
        h=z0 @ g,
        f=np.ones((x.shape[1], x.shape[1])),
        gamma=cfg.gamma0,
        k=k,
        labels=labels0,
        q=q0,
        theta=theta_from_assignment(q0),
        cfg=cfg,
    )


def tvs_neighborhoods(g) -> tuple:
    """Neighbor index sets read off the structure matrix's positive off-diagonals."""
    from .tvs import neighborhoods_from_matrix

    return neighborhoods_from_matrix(g)


def run(x, g, cfg: SolverConfig | None = None) -> SegmentationReport:
    """Full alternating optimization; returns labels and the iteration trace.

    Stops once the relative change of the augmented objective falls below
    ``cfg.tol_rel_obj`` or after ``cfg.max_outer`` iterations.  The trace
    records every objective term once per iteration; the augmented value is
    evaluated with the end-of-iteration multiplier and penalty, the
    quantity the convergence argument drives downward.
    """
    cfg = cfg or SolverConfig()
    if isinstance(x, FeatureSequence):
        seq = x.normalized() if cfg.normalize_columns else x
        data = seq.data
    else:
        seq = FeatureSequence(np.asarray(x, dtype=float))
        seq = seq.normalized() if cfg.normalize_columns else seq
        data = seq.data
    g = np.asarray(g, dtype=float)
    n = data.shape[1]
    if g.shape != (n, n):
        raise InvalidInputError(f"g must be {n}x{n}, got {g.shape}")

    state = _initialize(data, g, cfg)
    converged = False
    iterations = 0
    inner_tol = 1e-8
    for it in range(cfg.max_outer):
        iterations = it + 1
        gamma_used, f_used = state.gamma, state.f

        state.z = z_update(state, iteration=it, tol_rel=inner_tol)
        zg = state.z @ state.g
        state.h = h_update(zg, f_used, gamma_used, cfg.weight_tvs)
        state.f, state.gamma = dual_update(f_used, gamma_used, state.h, zg, cfg.rho)
        state.labels, state.q, state.theta = q_update(state)

        # Trace the augmented value with the freshly updated multiplier and
        # penalty: that is the quantity the convergence argument drives down.
        breakdown = objective(
            data, state.z, state.g, state.q, cfg,
            h=state.h, f=state.f, gamma=state.gamma,
        )
        if not np.isfinite(breakdown.aug_lagrangian):
            raise DivergenceError(
                f"non-finite objective at outer iteration {it}",
                trace=state.trace,
            )
        residual = float(np.linalg.norm(state.h - zg))
        if state.trace:
            prev = state.trace[-1].aug_lagrangian
            if breakdown.aug_lagrangian > prev + 1e-8:
                state.flags.append(f"nonmonotone_step:{it}")
        state.trace.append(breakdown)
        state.primal_residuals.append(residual)

        if len(state.trace) >= 2:
            prev = state.trace[-2].aug_lagrangian
            change = abs(prev - breakdown.aug_lagrangian)
            rel = change / max(1.0, abs(prev))
            if rel <= cfg.tol_rel_obj:
                converged = True
                break
            # the subproblem accuracy tracks the outer progress: loose while
            # the iterates move, near-exact as they settle (warm starts make
            # the tight solves cheap)
            inner_tol = float(np.clip(rel * 1e-3, 1e-11, 1e-8))

    return SegmentationReport(
        labels=state.labels,
        k=state.k,
        trace=tuple(state.trace),
        primal_residuals=tuple(state.primal_residuals),
        iterations=iterations,
        converged=converged,
        neighbor_disagreement=clustering.neighbor_disagreement(
            state.labels, state.neighborhoods
        ),
        final=state.trace[-1],
        flags=tuple(state.flags),
    )
