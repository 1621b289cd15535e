"""Dense linear algebra kernels.

Every routine works on float64 numpy arrays. ``qr_reduced``, ``svd``, ``pinv``
and ``gram_min_eig`` also accept stacks of matrices (leading batch axes), which
is what the Monte Carlo harness feeds them.
"""
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import BadExponent, BadRank, NoConvergence, NotOrthonormal, RankDeficient

PIVOT_RTOL = 1e-12
ORTHO_TOL = 1e-8


class SvdFactors(NamedTuple):
    """Reduced SVD ``A = U @ diag(s) @ V.T`` with ``q = min(rows, cols)``."""

    U: np.ndarray
    s: np.ndarray
    V: np.ndarray

    def partition(self, r):
        """Split into leading ``(U1, s1, V1)`` and trailing ``(U2, s2, V2)`` blocks."""
        return (
            (self.U[..., :r], self.s[..., :r], self.V[..., :r]),
            (self.U[..., r:], self.s[..., r:], self.V[..., r:]),
        )


class BestRank(NamedTuple):
    A_r: np.ndarray
    tail_frob: float


class LstsqResult(NamedTuple):
    x_star: np.ndarray
    residual_norm: float


def as_matrix(A):
    A = np.asarray(A, dtype=np.float64)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim < 2 or min(A.shape[-2:]) < 1:
        raise ValueError(f"expected a non-empty matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def _signed_qr(A):
    Q, R = np.linalg.qr(A, mode="reduced")
    signs = np.sign(np.diagonal(R, axis1=-2, axis2=-1))
    signs = np.where(signs == 0, 1.0, signs)
    Q = Q * signs[..., None, :]
    R = R * signs[..., :, None]
    return Q, R


def full_column_rank(R):
    """Pivot test on the diagonal of an upper-triangular ``R`` (batched)."""
    piv = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
    top = piv.max(axis=-1)
    return (top > 0) & (piv.min(axis=-1) > PIVOT_RTOL * top)


def qr_reduced(A):
    """Reduced QR with ``diag(R) >= 0``.

    Raises RankDeficient when the smallest pivot of ``R`` is at or below
    ``1e-12`` times the largest one.
    """
    A = as_matrix(A)
    n, d = A.shape[-2:]
    if n < d:
        raise RankDeficient(f"{n}x{d} matrix cannot have full column rank")
    Q, R = _signed_qr(A)
    if not np.all(full_column_rank(R)):
        raise RankDeficient("matrix is numerically rank deficient")
    return Q, R


def svd(A):
    A = as_matrix(A)
    try:
        U, s, Vt = np.linalg.svd(A, full_matrices=False)
    except np.linalg.LinAlgError:
        if A.ndim != 2:
            raise NoConvergence("batched SVD did not converge")
        try:
            U, s, Vt = scipy.linalg.svd(A, full_matrices=False, lapack_driver="gesvd")
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(str(exc)) from exc
    return SvdFactors(U, s, np.swapaxes(Vt, -1, -2))


def rank_cutoff(shape, smax):
    return max(shape[-2:]) * np.finfo(np.float64).eps * smax


def numerical_rank(A):
    A = as_matrix(A)
    s = np.linalg.svd(A, compute_uv=False)
    return int(np.sum(s > rank_cutoff(A.shape, s[0]))) if s[0] > 0 else 0


def pinv(A):
    """Moore-Penrose pseudoinverse, cutting singular values at or below
    ``max(rows, cols) * eps * s_max``."""
    A = as_matrix(A)
    U, s, V = svd(A)
    smax = s[..., :1]
    keep = s > rank_cutoff(A.shape, smax)
    s_inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    return (V * s_inv[..., None, :]) @ np.swapaxes(U, -1, -2)


def lstsq_exact(A, b):
    """Solve ``min ||Ax - b||_2`` through the reduced QR of a full-rank ``A``."""
    A = as_matrix(A)
    b = np.asarray(b, dtype=np.float64)
    Q, R = qr_reduced(A)
    x = scipy.linalg.solve_triangular(R, Q.T @ b, lower=False)
    return LstsqResult(x, float(np.linalg.norm(A @ x - b)))


def best_rank_r(A, r):
    """Truncated SVD ``A_r`` and the Eckart-Young tail ``sqrt(sum_{j>r} s_j^2)``."""
    A = as_matrix(A)
    f = svd(A)
    rank = int(np.sum(f.s > rank_cutoff(A.shape, f.s[0]))) if f.s[0] > 0 else 0
    if not 1 <= r < rank:
        raise BadRank(f"need 1 <= r < rank(A) = {rank}, got r = {r}")
    A_r = (f.U[:, :r] * f.s[:r]) @ f.V[:, :r].T
    return BestRank(A_r, float(np.sqrt(np.sum(f.s[r:] ** 2))))


def lp_norm(v, p):
    if not p >= 1 or not np.isfinite(p):
        raise BadExponent(f"p must be finite and >= 1, got {p}")
    v = np.abs(np.asarray(v, dtype=np.float64))
    if p == 1:
        return float(v.sum())
    if p == 2:
        return float(np.linalg.norm(v))
    # scale first so large entries do not overflow the p-th power
    m = v.max(initial=0.0)
    if m == 0:
        return 0.0
    return float(m * np.sum((v / m) ** p) ** (1.0 / p))


def check_orthonormal(U, tol=ORTHO_TOL):
    U = as_matrix(U)
    err = np.abs(U.T @ U - np.eye(U.shape[1])).max()
    if err > tol:
        raise NotOrthonormal(f"U^T U deviates from identity by {err:.3g}")
    return U


def gram_min_eig(U, Omega):
    """Smallest eigenvalue of ``U^T Omega Omega^T U``.

    Equals ``min ||Omega^T x||^2`` over unit ``x`` in ``range(U)``. ``Omega``
    may be a stack ``(..., n, k)``; the result then has the stack's shape.
    """
    U = check_orthonormal(U)
    Omega = np.asarray(Omega, dtype=np.float64)
    W = U.T @ Omega
    G = W @ np.swapaxes(W, -1, -2)
    lam = np.linalg.eigvalsh(G)[..., 0]
    return float(lam) if lam.ndim == 0 else lam
