"""Dense linear-algebra kernels used by the segmentation solver.

Real Schur decomposition, a Bartels-Stewart Sylvester solver with a
quasi-triangular back-substitution, a symmetric eigensolver returning the
smallest eigenpairs with a fixed sign convention, and the projection onto
the feasible set of coefficient matrices (zero diagonal, nonnegative).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, NumericalFailureError, SingularSystemError

# Guard below which an eigenvalue sum makes the Sylvester system singular.
SINGULAR_EIGSUM_TOL = 1e-12
# Relative tolerance used when dropping near-null directions in the
# minimum-norm solve; sized to sit far above eigensolver noise and far
# below any genuinely nonzero eigenvalue sum of the solver's systems.
DROP_EIGSUM_RTOL = 1e-9
# Maximum tolerated asymmetry (relative) for the symmetric eigensolver.
SYMMETRY_RTOL = 1e-10


@dataclass(frozen=True)
class SchurFactorization:
    """Real Schur form A = Q T Q^T with orthogonal Q and quasi-triangular T."""

    q: np.ndarray
    t: np.ndarray


def _check_square_finite(m, name):
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"{name} must be a square matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return m


def schur(a: np.ndarray) -> SchurFactorization:
    """Real Schur decomposition of a square matrix.

    Returns an orthogonal ``q`` and quasi-upper-triangular ``t`` (1x1 and
    2x2 diagonal blocks) with ``q @ t @ q.T == a`` up to roundoff.
    Deterministic for a fixed input.
    """
    a = _check_square_finite(a, "a")
    try:
        t, q = scipy.linalg.schur(a, output="real")
    except np.linalg.LinAlgError as exc:  # pragma: no cover - QR iteration stall
        raise NumericalFailureError(f"Schur iteration failed to converge: {exc}") from exc
    return SchurFactorization(q=q, t=t)


def _quasi_block_starts(t):
    """Indices of diagonal-block starts of a real Schur form."""
    n = t.shape[0]
    starts = []
    k = 0
    while k < n:
        starts.append(k)
        if k < n - 1 and t[k + 1, k] != 0.0:
            k += 2
        else:
            k += 1
    return starts


def _quasi_eigvals(t):
    """Eigenvalues read off the diagonal blocks of a real Schur form."""
    vals = []
    for k in _quasi_block_starts(t):
        if k < t.shape[0] - 1 and t[k + 1, k] != 0.0:
            vals.extend(np.linalg.eigvals(t[k : k + 2, k : k + 2]))
        else:
            vals.append(t[k, k])
    return np.asarray(vals, dtype=complex)


def _is_symmetric(m, rtol=1e-12):
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    return float(np.abs(m - m.T).max(initial=0.0)) <= rtol * scale


def _solve_quasi_triangular_sylvester(ta, tb, c):
    """Solve ta @ y + y @ tb = c for quasi-upper-triangular ta, tb.

    Column blocks of tb are eliminated left to right; within each block the
    rows of ta are eliminated bottom up, so every pivot is a linear system
    of size at most 4 (vec form of an r x s block, r, s <= 2).
    """
    n, m = c.shape
    y = np.zeros((n, m))
    a_starts = _quasi_block_starts(ta)
    b_starts = _quasi_block_starts(tb)

    def block_end(starts, idx, size):
        return starts[idx + 1] if idx + 1 < len(starts) else size

    for jb, j0 in enumerate(b_starts):
        j1 = block_end(b_starts, jb, m)
        bjj = tb[j0:j1, j0:j1]
        f = c[:, j0:j1] - y[:, :j0] @ tb[:j0, j0:j1]
        for ib in range(len(a_starts) - 1, -1, -1):
            i0 = a_starts[ib]
            i1 = block_end(a_starts, ib, n)
            aii = ta[i0:i1, i0:i1]
            rhs = f[i0:i1] - ta[i0:i1, i1:] @ y[i1:, j0:j1]
            r, s = i1 - i0, j1 - j0
            # vec (column-major): (I_s (x) aii + bjj^T (x) I_r) vec(w) = vec(rhs)
            mat = np.kron(np.eye(s), aii) + np.kron(bjj.T, np.eye(r))
            w = np.linalg.solve(mat, rhs.reshape(-1, order="F"))
            y[i0:i1, j0:j1] = w.reshape(r, s, order="F")
    return y


def solve_sylvester(
    a: np.ndarray,
    b: np.ndarray,
    c: np.ndarray,
    *,
    drop_singular: bool = False,
) -> np.ndarray:
    """Solve the Sylvester equation ``a @ z + z @ b = c`` (Bartels-Stewart).

    Both coefficient matrices are reduced to real Schur form and the
    transformed system is solved by quasi-triangular back-substitution.
    Symmetric inputs take a spectral fast path where the transformed system
    decouples entrywise.

    With ``drop_singular=False`` an eigenvalue sum with modulus below
    ``SINGULAR_EIGSUM_TOL`` raises :class:`SingularSystemError`.  With
    ``drop_singular=True`` (symmetric inputs only) near-null directions are
    zeroed instead, returning the minimum-norm solution of the consistent
    part of the system.
    """
    a = _check_square_finite(a, "a")
    b = _check_square_finite(b, "b")
    c = np.asarray(c, dtype=float)
    if c.shape != (a.shape[0], b.shape[0]):
        raise InvalidInputError(
            f"c has shape {c.shape}, expected {(a.shape[0], b.shape[0])}"
        )
    if not np.all(np.isfinite(c)):
        raise InvalidInputError("c contains non-finite entries")

    symmetric = _is_symmetric(a) and _is_symmetric(b)
    if drop_singular and not symmetric:
        raise InvalidInputError("drop_singular requires symmetric a and b")

    if symmetric:
        alpha, qa = np.linalg.eigh(a)
        beta, qb = np.linalg.eigh(b)
        denom = alpha[:, None] + beta[None, :]
        if drop_singular:
            tol = SINGULAR_EIGSUM_TOL + DROP_EIGSUM_RTOL * (
                float(np.abs(alpha).max(initial=0.0)) + float(np.abs(beta).max(initial=0.0))
            )
            mask = np.abs(denom) > tol
            ct = qa.T @ c @ qb
            zt = np.zeros_like(ct)
            np.divide(ct, denom, out=zt, where=mask)
        else:
            if float(np.abs(denom).min()) < SINGULAR_EIGSUM_TOL:
                raise SingularSystemError(
                    "eigenvalue sum below 1e-12: Sylvester system is singular"
                )
            zt = (qa.T @ c @ qb) / denom
        return qa @ zt @ qb.T

    fa = schur(a)
    fb = schur(b)
    alpha = _quasi_eigvals(fa.t)
    beta = _quasi_eigvals(fb.t)
    if float(np.abs(alpha[:, None] + beta[None, :]).min()) < SINGULAR_EIGSUM_TOL:
        raise SingularSystemError(
            "eigenvalue sum below 1e-12: Sylvester system is singular"
        )
    ct = fa.q.T @ c @ fb.q
    zt = _solve_quasi_triangular_sylvester(fa.t, fb.t, ct)
    return fa.q @ zt @ fb.q.T


def smallest_eigvecs(s: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Smallest ``k`` eigenpairs of a symmetric matrix.

    Returns ``(values, vectors)`` with eigenvalues ascending and orthonormal
    column eigenvectors.  Each vector is sign-normalized so its
    largest-magnitude entry is positive, making downstream seeding
    reproducible.
    """
    s = _check_square_finite(s, "s")
    n = s.shape[0]
    if not 1 <= k <= n:
        raise InvalidInputError(f"k={k} out of range [1, {n}]")
    scale = max(1.0, float(np.abs(s).max(initial=0.0)))
    if float(np.abs(s - s.T).max(initial=0.0)) > SYMMETRY_RTOL * scale:
        raise InvalidInputError("matrix is not symmetric within tolerance")
    values, vectors = np.linalg.eigh((s + s.T) / 2.0)
    values = values[:k]
    vectors = vectors[:, :k].copy()
    for j in range(k):
        pivot = int(np.argmax(np.abs(vectors[:, j])))
        if vectors[pivot, j] < 0:
            vectors[:, j] = -vectors[:, j]
    return values, vectors


def project_feasible(z: np.ndarray) -> np.ndarray:
    """Project onto {diag(z) = 0, z >= 0}, the Frobenius-nearest feasible point.

    Entrywise: negatives and the diagonal go to zero, everything else is
    kept.  Idempotent.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[0] != z.shape[1]:
        raise InvalidInputError(f"z must be square, got shape {z.shape}")
    if not np.all(np.isfinite(z)):
        raise InvalidInputError("z contains non-finite entries")
    out = np.where(z < 0.0, 0.0, z)
    np.fill_diagonal(out, 0.0)
    return out
