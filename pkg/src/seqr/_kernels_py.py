"""Pure-Python (numpy) twins of the compiled kernels in ``_kernels.pyx``.

Same algorithms, same pair schedule, same sign handling. Results agree with
the compiled versions to rounding, not bitwise, because numpy reductions may
sum in a different order.
"""

import numpy as np


def householder_qr(b):
    R = np.array(b, dtype=np.float64, order="C", copy=True)
    m, r = R.shape
    vs = [None] * r
    betas = np.zeros(r)
    for k in range(r):
        scale = np.abs(R[k:, k]).max()
        if scale == 0.0:
            continue
        # the reflector ignores v's scale, so work on col / scale to keep
        # tiny or huge columns out of underflow and overflow
        v = R[k:, k] / scale
        unit_norm = np.sqrt(np.dot(v, v))
        norm = scale * unit_norm
        sgn = 1.0 if R[k, k] >= 0.0 else -1.0
        v[0] += sgn * unit_norm
        betas[k] = 2.0 / np.dot(v, v)
        vs[k] = v
        if k + 1 < r:
            block = R[k:, k + 1:]
            block -= betas[k] * np.outer(v, v @ block)
        R[k, k] = -sgn * norm
        R[k + 1:, k] = 0.0

    Q = np.eye(m, r)
    for k in range(r - 1, -1, -1):
        if vs[k] is None:
            continue
        v = vs[k]
        Q[k:, :] -= betas[k] * np.outer(v, v @ Q[k:, :])

    neg = np.diag(R)[:r] < 0.0
    R[:r][neg] *= -1.0
    Q[:, neg] *= -1.0
    return Q, np.ascontiguousarray(R[:r])


def jacobi_rows(X, Y, schedule, tol, max_sweeps):
    # each round's pairs are disjoint, so a round is one vectorized update
    for sweep in range(max_sweeps):
        rotated = False
        for pairs in schedule:
            live = (pairs[:, 0] >= 0) & (pairs[:, 1] >= 0)
            I = pairs[live, 0]
            J = pairs[live, 1]
            if I.size == 0:
                continue
            Xi, Xj = X[I], X[J]
            a = np.einsum("ij,ij->i", Xi, Xi)
            b = np.einsum("ij,ij->i", Xj, Xj)
            g = np.einsum("ij,ij->i", Xi, Xj)
            act = (a != 0.0) & (b != 0.0) & (np.abs(g) > tol * np.sqrt(a) * np.sqrt(b))
            if not act.any():
                continue
            rotated = True
            I, J, a, b, g = I[act], J[act], a[act], b[act], g[act]
            zeta = (b - a) / (2.0 * g)
            t = np.where(zeta >= 0.0, 1.0, -1.0) / (np.abs(zeta) + np.hypot(1.0, zeta))
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            for A in (X, Y):
                Ai, Aj = A[I], A[J]
                A[I] = c[:, None] * Ai - s[:, None] * Aj
                A[J] = s[:, None] * Ai + c[:, None] * Aj
        if not rotated:
            return sweep + 1
    return max_sweeps


def batched_matvec_norms(M, X):
    M = np.asarray(M, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    N, p, q = M.shape
    H = np.einsum("kij,kj->ki", M, X)
    norms = np.sqrt(np.einsum("ki,ki->k", H, H))
    return norms, H, N * p * q
