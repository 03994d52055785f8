"""Dense linear algebra kernels.

All functions take and return plain ``numpy`` float64 arrays. ``cholesky`` and
``logdet_spd`` accept stacks of matrices (leading batch axes); ``sym_eig`` and
``inv_sqrt_spd`` work on a single matrix.
"""

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NoConvergence, NotPositiveDefinite

SYMMETRY_TOL = 1e-10
MAX_JACOBI_SWEEPS = 50


def _as_square(A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim < 2 or A.shape[-1] != A.shape[-2]:
        raise DimensionMismatch(f"expected square matrix, got shape {A.shape}")
    return A


def symmetrize(A, tol=SYMMETRY_TOL):
    """Return ``(A + A^T) / 2``, refusing inputs that are not symmetric to within ``tol``.

    The tolerance is relative to ``max(1, max|A|)`` so that large-valued
    Jacobians with rounding drift are still accepted.
    """
    A = _as_square(A)
    At = np.swapaxes(A, -1, -2)
    scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
    if np.any(np.abs(A - At) > tol * scale):
        raise ValueError("matrix is not symmetric within tolerance")
    return 0.5 * (A + At)


def cholesky(A):
    """Lower Cholesky factor ``L`` with ``L @ L.T == A``.

    Raises
    ------
    NotPositiveDefinite
        If a pivot is not strictly positive.
    """
    A = symmetrize(A)
    if not np.all(np.isfinite(A)):
        raise NotPositiveDefinite("matrix has non-finite entries")
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    if not np.all(np.isfinite(L)):
        raise NotPositiveDefinite("cholesky factor is not finite")
    return L


def logdet_from_cholesky(L):
    return 2.0 * np.sum(np.log(np.diagonal(L, axis1=-2, axis2=-1)), axis=-1)


def logdet_spd(A):
    """``log det A`` for symmetric positive definite ``A`` (batched over leading axes)."""
    return logdet_from_cholesky(cholesky(A))


def sym_eig(A, max_sweeps=MAX_JACOBI_SWEEPS):
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns
    -------
    eigenvalues : ndarray (n,)
        In ascending order.
    eigenvectors : ndarray (n, n)
        Orthogonal; column ``i`` pairs with ``eigenvalues[i]``.
    """
    A = symmetrize(A)
    if A.ndim != 2:
        raise DimensionMismatch("sym_eig expects a single matrix")
    n = A.shape[0]
    A = A.copy()
    V = np.eye(n)
    fro = np.linalg.norm(A)
    offdiag = ~np.eye(n, dtype=bool)
    for sweep in range(max_sweeps):
        off = np.linalg.norm(A[offdiag])
        if off <= 1e-15 * n * fro or off == 0.0:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                app, aqq = A[p, p], A[q, q]
                g = 100.0 * abs(apq)
                # after a few sweeps, drop off-diagonals below the precision of both pivots
                if sweep > 3 and abs(app) + g == abs(app) and abs(aqq) + g == abs(aqq):
                    A[p, q] = A[q, p] = 0.0
                    continue
                h = aqq - app
                if abs(h) + g == abs(h):
                    t = apq / h
                else:
                    theta = 0.5 * h / apq
                    t = 1.0 / (abs(theta) + np.sqrt(1.0 + theta * theta))
                    if theta < 0.0:
                        t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp, vq = V[:, p].copy(), V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        raise NoConvergence(f"Jacobi iteration did not converge in {max_sweeps} sweeps")
    lam = np.diag(A).copy()
    order = np.argsort(lam, kind="stable")
    return lam[order], V[:, order]


def inv_sqrt_spd(A):
    """Symmetric inverse square root ``A^{-1/2}`` of an SPD matrix."""
    lam, V = sym_eig(A)
    if lam[0] <= 1e-12:
        raise NotPositiveDefinite(f"minimum eigenvalue {lam[0]:.3e} is not positive")
    B = (V * lam ** -0.5) @ V.T
    return 0.5 * (B + B.T)


def sqrt_spd(A):
    lam, V = sym_eig(A)
    if lam[0] < 0:
        raise NotPositiveDefinite(f"minimum eigenvalue {lam[0]:.3e} is negative")
    B = (V * np.sqrt(lam)) @ V.T
    return 0.5 * (B + B.T)


def _check_solve(L, b):
    L = _as_square(L)
    b = np.asarray(b, dtype=np.float64)
    if L.ndim != 2 or b.shape[0] != L.shape[0]:
        raise DimensionMismatch(f"cannot solve {L.shape} system with rhs {b.shape}")
    return L, b


def solve_lower(L, b):
    L, b = _check_solve(L, b)
    return solve_triangular(L, b, lower=True)


def solve_upper(U, b):
    U, b = _check_solve(U, b)
    return solve_triangular(U, b, lower=False)


def matmul(A, B):
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    k_a = A.shape[-1]
    k_b = B.shape[-2] if B.ndim >= 2 else B.shape[0]
    if k_a != k_b:
        raise DimensionMismatch(f"matmul shapes {A.shape} and {B.shape} do not align")
    return np.matmul(A, B)


def transpose(A):
    return np.swapaxes(np.asarray(A), -1, -2)


def axpy(alpha, x, y):
    """``alpha * x + y``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatch(f"axpy shapes {x.shape} and {y.shape} differ")
    return alpha * x + y
