"""Sparse kernels and Krylov solvers.

Matrices are scipy CSR (sorted, duplicate-free column indices).  The
GMRES here is restarted and right preconditioned: convergence is always
declared on the recomputed, unpreconditioned residual, so the returned
solution satisfies ||b - A x|| <= tol ||b|| regardless of how ill
conditioned the preconditioner is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.io import mmread, mmwrite
from scipy.sparse import csr_matrix, issparse


class IndefiniteOperatorError(RuntimeError):
    """Raised when CG meets a direction with nonpositive curvature."""


@dataclass
class SolveReport:
    """Outcome of an iterative solve."""

    iterations: int
    relative_residual: float
    converged: bool
    breakdown: bool = False


def spmv(a: csr_matrix, x: np.ndarray) -> np.ndarray:
    """Matrix-vector product y = A x with an explicit dimension check."""
    if a.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {a.shape}, vector {x.shape}")
    return a @ x


def triple_product(p: csr_matrix, a: csr_matrix) -> csr_matrix:
    """Galerkin product P^T A P with the symbolic sparsity of the product."""
    if a.shape[0] != a.shape[1] or p.shape[0] != a.shape[0]:
        raise ValueError(f"dimension mismatch: P {p.shape}, A {a.shape}")
    out = (p.T @ (a @ p)).tocsr()
    out.sort_indices()
    return out


def _as_operator(a):
    if issparse(a):
        return lambda v: a @ v
    if callable(a):
        return a
    raise TypeError("expected a sparse matrix or a callable operator")


def gmres(
    a,
    b: np.ndarray,
    m_apply=None,
    restart: int = 10,
    tol: float = 1e-7,
    maxit: int = 200,
) -> tuple[np.ndarray, SolveReport]:
    """Restarted GMRES with right preconditioning.

    Solves A M^-1 (M x) = b; the Arnoldi basis uses modified Gram-Schmidt
    with one reorthogonalization pass when orthogonality loss exceeds
    1e-8, and the least-squares problem is updated by Givens rotations.
    The true residual is recomputed at every restart boundary.

    Args:
        a: Sparse matrix or callable v -> A v.
        b: Right-hand side.
        m_apply: Preconditioner action v -> M^-1 v (identity if None).
        restart: Arnoldi cycle length.
        tol: Relative residual target on ||b - A x|| / ||b||.
        maxit: Total inner-iteration cap.

    Returns:
        (x, SolveReport); ``iterations`` counts inner Arnoldi steps.
    """
    a_op = _as_operator(a)
    m_op = (lambda v: v) if m_apply is None else m_apply
    n = b.shape[0]
    x = np.zeros(n)
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return x, SolveReport(0, 0.0, True)

    iters = 0
    breakdown = False
    r = b.copy()
    beta = norm_b
    while iters < maxit:
        v = np.zeros((restart + 1, n))
        h = np.zeros((restart + 1, restart))
        cs = np.zeros(restart)
        sn = np.zeros(restart)
        g = np.zeros(restart + 1)
        v[0] = r / beta
        g[0] = beta

        j_last = -1
        happy = False
        for j in range(restart):
            if iters >= maxit:
                break
            w = a_op(m_op(v[j]))
            iters += 1
            norm_w0 = np.linalg.norm(w)
            for i in range(j + 1):
                h[i, j] = v[i] @ w
                w -= h[i, j] * v[i]
            # One reorthogonalization pass if orthogonality degraded.
            corr = v[: j + 1] @ w
            if np.linalg.norm(corr) > 1e-8 * max(norm_w0, 1e-300):
                w -= corr @ v[: j + 1]
                h[: j + 1, j] += corr
            h[j + 1, j] = np.linalg.norm(w)

            if h[j + 1, j] <= 1e-14 * max(norm_w0, 1e-300):
                happy = True
                j_last = j
                for i in range(j):
                    _apply_givens(h, cs, sn, i, j)
                if abs(h[j, j]) > 0:
                    cs[j], sn[j] = _make_givens(h[j, j], h[j + 1, j])
                    _rotate(h, g, cs, sn, j)
                break
            v[j + 1] = w / h[j + 1, j]

            for i in range(j):
                _apply_givens(h, cs, sn, i, j)
            cs[j], sn[j] = _make_givens(h[j, j], h[j + 1, j])
            _rotate(h, g, cs, sn, j)
            j_last = j
            if abs(g[j + 1]) <= tol * norm_b:
                break

        if j_last < 0:
            break
        y = _back_substitute(h, g, j_last + 1)
        x = x + m_op(v[: j_last + 1].T @ y)
        r = b - a_op(x)
        beta = np.linalg.norm(r)
        if beta <= tol * norm_b:
            return x, SolveReport(iters, beta / norm_b, True, breakdown=happy)
        if happy:
            # Invariant subspace reached but the true residual still misses
            # the target: flag the breakdown and stop.
            breakdown = True
            break

    return x, SolveReport(iters, beta / norm_b, False, breakdown)


def _make_givens(f: float, g: float) -> tuple[float, float]:
    rad = np.hypot(f, g)
    return f / rad, g / rad


def _apply_givens(h, cs, sn, i, j) -> None:
    tmp = cs[i] * h[i, j] + sn[i] * h[i + 1, j]
    h[i + 1, j] = -sn[i] * h[i, j] + cs[i] * h[i + 1, j]
    h[i, j] = tmp


def _rotate(h, g, cs, sn, j) -> None:
    h[j, j] = cs[j] * h[j, j] + sn[j] * h[j + 1, j]
    h[j + 1, j] = 0.0
    g[j + 1] = -sn[j] * g[j]
    g[j] = cs[j] * g[j]


def _back_substitute(h, g, k: int) -> np.ndarray:
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        y[i] = (g[i] - h[i, i + 1 : k] @ y[i + 1 : k]) / h[i, i]
    return y


def pcg(
    a,
    b: np.ndarray,
    m_apply=None,
    tol: float = 1e-4,
    maxit: int = 30,
) -> tuple[np.ndarray, SolveReport]:
    """Preconditioned conjugate gradients for SPD systems.

    Defaults match the coarse-level solve of the multigrid cycle
    (relative residual 1e-4, at most 30 iterations).

    Raises:
        IndefiniteOperatorError: If p^T A p <= 0 is encountered.
    """
    a_op = _as_operator(a)
    m_op = (lambda v: v) if m_apply is None else m_apply
    n = b.shape[0]
    x = np.zeros(n)
    norm_b = np.linalg.norm(b)
    if norm_b == 0.0:
        return x, SolveReport(0, 0.0, True)

    r = b.copy()
    z = m_op(r)
    p = z.copy()
    rz = r @ z
    iters = 0
    res = np.linalg.norm(r)
    while iters < maxit:
        ap = a_op(p)
        pap = p @ ap
        if pap <= 0.0:
            raise IndefiniteOperatorError(
                f"nonpositive curvature p^T A p = {pap:.3e} at iteration {iters}"
            )
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        iters += 1
        res = np.linalg.norm(r)
        if res <= tol * norm_b:
            return x, SolveReport(iters, res / norm_b, True)
        z = m_op(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, SolveReport(iters, res / norm_b, False)


def save_matrix_market(path, a: csr_matrix) -> None:
    """Write a sparse matrix in Matrix Market coordinate format."""
    mmwrite(str(path), a)


def load_matrix_market(path) -> csr_matrix:
    """Read a Matrix Market file as CSR with sorted indices."""
    mat = mmread(str(path)).tocsr()
    mat.sort_indices()
    return mat


def save_vector(path, x: np.ndarray) -> None:
    """Write a vector as headerless one-value-per-line text."""
    np.savetxt(str(path), x, fmt="%.17g")


def load_vector(path) -> np.ndarray:
    """Read a headerless one-value-per-line vector."""
    return np.loadtxt(str(path), ndmin=1)
