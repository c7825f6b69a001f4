"""Small dense linear algebra for adapter routing.

Matrices and vectors are plain float64 numpy arrays. The decompositions are
implemented here (Householder QR, one-sided Jacobi SVD) rather than borrowed
from LAPACK so that sign conventions and determinism are under our control.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionError, NonFiniteError

EPS = np.finfo(np.float64).eps
RANK_TOL = 1e-8


def _frozen(a):
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


def as_matrix(a, name="matrix"):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise DimensionError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise NonFiniteError(f"{name} has non-finite entries")
    return a


def as_vector(x, name="vector"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] < 1:
        raise DimensionError(f"{name} must be a non-empty 1-D array, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise NonFiniteError(f"{name} has non-finite entries")
    return x


@dataclass(frozen=True)
class ReducedQr:
    q: np.ndarray
    r: np.ndarray


@dataclass(frozen=True)
class ThinSvd:
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def numerical_rank(self, tol=RANK_TOL):
        return int(np.count_nonzero(self.s > tol))

    def reconstruct(self):
        return (self.u * self.s) @ self.v.T


def matvec(a, x):
    a = as_matrix(a, "a")
    x = as_vector(x, "x")
    if a.shape[1] != x.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} matrix by length-{x.shape[0]} vector")
    return a @ x


def norm2(x):
    x = as_vector(x, "x")
    return float(np.sqrt(np.dot(x, x)))


def reduced_qr(b):
    """Householder QR ``b = q @ r`` with ``q`` m x r and a nonnegative diagonal
    on ``r``. Zero columns are not pivoted; they leave zeros on the diagonal."""
    b = as_matrix(b, "b")
    m, r = b.shape
    if m < r:
        raise DimensionError(f"reduced QR needs rows >= cols, got {b.shape}")
    q, rr = kernels.householder_qr(b)
    return ReducedQr(_frozen(q), _frozen(np.triu(rr)))


def _complete_orthonormal(u, missing):
    # fill columns flagged in `missing` with unit vectors orthogonal to the rest
    m = u.shape[0]
    have = [k for k in range(u.shape[1]) if not missing[k]]
    basis = [u[:, k] for k in have]
    cand = 0
    for k in np.flatnonzero(missing):
        while True:
            e = np.zeros(m)
            e[cand] = 1.0
            cand += 1
            for _ in range(2):
                for w in basis:
                    e -= np.dot(w, e) * w
            nrm = np.sqrt(np.dot(e, e))
            if nrm > 0.5:
                break
        e /= nrm
        u[:, k] = e
        basis.append(e)
    return u


def _jacobi_tall(t):
    """SVD of a tall-or-square ``t`` (M x p, M >= p) by rotating its columns.
    Returns (u, s, v) sorted by s, with U columns for negligible singular
    values completed to an orthonormal set."""
    M, p = t.shape
    X = np.array(t.T, dtype=np.float64, order="C", copy=True)
    Y = np.eye(p)
    kernels.jacobi_rows(X, Y, tol=max(M, 1) * EPS)
    s = np.sqrt(np.einsum("ij,ij->i", X, X))
    order = np.argsort(-s, kind="stable")
    s = s[order]
    X = X[order]
    v = Y[order].T.copy()
    u = np.zeros((M, p))
    # columns at roundoff level relative to the largest carry no direction of
    # their own (often a remnant of the dominant one), so they are completed
    nz = s > (s[0] * M * EPS if p else 0.0)
    u[:, nz] = (X[nz] / s[nz, None]).T
    if not nz.all():
        u = _complete_orthonormal(u, ~nz)
    return u, s, v


def _canonical_signs(u, v):
    # largest-magnitude entry of every v column is made positive
    idx = np.argmax(np.abs(v), axis=0)
    flip = v[idx, np.arange(v.shape[1])] < 0.0
    v[:, flip] *= -1.0
    u[:, flip] *= -1.0
    return u, v


def thin_svd(mat, rank=None):
    """Thin SVD ``mat = u @ diag(s) @ v.T`` truncated to ``rank`` terms
    (default ``min(m, n)``), computed by one-sided Jacobi on the smaller
    dimension. Singular values are nonincreasing; signs are canonical."""
    a = as_matrix(mat, "mat")
    m, n = a.shape
    k = min(m, n)
    rank = k if rank is None else int(rank)
    if not 1 <= rank <= k:
        raise DimensionError(f"rank budget {rank} outside [1, {k}]")
    if m >= n:
        u, s, v = _jacobi_tall(a)
    else:
        v, s, u = _jacobi_tall(a.T)
    u, s, v = u[:, :rank].copy(), s[:rank].copy(), v[:, :rank].copy()
    u, v = _canonical_signs(u, v)
    return ThinSvd(_frozen(u), _frozen(s), _frozen(v))


def thin_svd_product(b, a, rank=None):
    """Thin SVD of ``b @ a`` for a rank-r factorization (b: m x r, a: r x n)
    without forming the m x n product: QR of ``b`` then Jacobi on the r x n
    core ``R_b @ a``."""
    b = as_matrix(b, "b")
    a = as_matrix(a, "a")
    m, r = b.shape
    if a.shape[0] != r:
        raise DimensionError(f"inner dimensions differ: {b.shape} @ {a.shape}")
    if r > a.shape[1]:
        raise DimensionError(f"rank {r} exceeds input dimension {a.shape[1]}")
    qr = reduced_qr(b)
    core = thin_svd(qr.r @ a, rank=r if rank is None else rank)
    u = qr.q @ core.u
    return ThinSvd(_frozen(u), core.s, core.v)
