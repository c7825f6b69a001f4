# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: Householder QR, one-sided Jacobi sweeps and batched
matrix-vector norms with multiply-accumulate counting.

Each function mirrors ``_kernels_py`` exactly in algorithm and pair order.
"""

import numpy as np

from libc.math cimport sqrt, fabs, hypot


def householder_qr(const double[:, :] b):
    cdef Py_ssize_t m = b.shape[0], r = b.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double norm, alpha, sgn, vtv, dot, f, scale, unit

    R_arr = np.array(b, dtype=np.float64, order="C", copy=True)
    V_arr = np.zeros((r, m), dtype=np.float64)
    beta_arr = np.zeros(r, dtype=np.float64)
    Q_arr = np.zeros((m, r), dtype=np.float64)
    cdef double[:, ::1] R = R_arr
    cdef double[:, ::1] V = V_arr
    cdef double[::1] beta = beta_arr
    cdef double[:, ::1] Q = Q_arr

    for k in range(r):
        scale = 0.0
        for i in range(k, m):
            if fabs(R[i, k]) > scale:
                scale = fabs(R[i, k])
        if scale == 0.0:
            continue
        unit = 0.0
        for i in range(k, m):
            V[k, i] = R[i, k] / scale
            unit += V[k, i] * V[k, i]
        unit = sqrt(unit)
        norm = scale * unit
        alpha = R[k, k]
        sgn = 1.0 if alpha >= 0.0 else -1.0
        V[k, k] += sgn * unit
        vtv = 0.0
        for i in range(k, m):
            vtv += V[k, i] * V[k, i]
        beta[k] = 2.0 / vtv
        for j in range(k + 1, r):
            dot = 0.0
            for i in range(k, m):
                dot += V[k, i] * R[i, j]
            f = beta[k] * dot
            for i in range(k, m):
                R[i, j] -= f * V[k, i]
        R[k, k] = -sgn * norm
        for i in range(k + 1, m):
            R[i, k] = 0.0

    for j in range(r):
        Q[j, j] = 1.0
    for k in range(r - 1, -1, -1):
        if beta[k] == 0.0:
            continue
        for j in range(r):
            dot = 0.0
            for i in range(k, m):
                dot += V[k, i] * Q[i, j]
            f = beta[k] * dot
            for i in range(k, m):
                Q[i, j] -= f * V[k, i]

    for k in range(r):
        if R[k, k] < 0.0:
            for j in range(r):
                R[k, j] = -R[k, j]
            for i in range(m):
                Q[i, k] = -Q[i, k]
    return Q_arr, np.ascontiguousarray(R_arr[:r])


def jacobi_rows(double[:, ::1] X, double[:, ::1] Y, const long[:, :, ::1] schedule,
                double tol, int max_sweeps):
    """Orthogonalize the rows of ``X`` in place by plane rotations, applying
    the same rotations to the rows of ``Y``. Returns the sweep count."""
    cdef Py_ssize_t p = X.shape[0], m = X.shape[1], q = Y.shape[1]
    cdef Py_ssize_t n_rounds = schedule.shape[0], n_pairs = schedule.shape[1]
    cdef Py_ssize_t rd, pr, i, j, t
    cdef double a, b, g, zeta, tt, c, s, xi, xj
    cdef int sweep, rotated
    for sweep in range(max_sweeps):
        rotated = 0
        for rd in range(n_rounds):
            for pr in range(n_pairs):
                i = schedule[rd, pr, 0]
                j = schedule[rd, pr, 1]
                if i < 0 or j < 0:
                    continue
                a = 0.0
                b = 0.0
                g = 0.0
                for t in range(m):
                    a += X[i, t] * X[i, t]
                    b += X[j, t] * X[j, t]
                    g += X[i, t] * X[j, t]
                if a == 0.0 or b == 0.0 or fabs(g) <= tol * sqrt(a) * sqrt(b):
                    continue
                rotated = 1
                zeta = (b - a) / (2.0 * g)
                tt = (1.0 if zeta >= 0.0 else -1.0) / (fabs(zeta) + hypot(1.0, zeta))
                c = 1.0 / sqrt(1.0 + tt * tt)
                s = c * tt
                for t in range(m):
                    xi = X[i, t]
                    xj = X[j, t]
                    X[i, t] = c * xi - s * xj
                    X[j, t] = s * xi + c * xj
                for t in range(q):
                    xi = Y[i, t]
                    xj = Y[j, t]
                    Y[i, t] = c * xi - s * xj
                    Y[j, t] = s * xi + c * xj
        if not rotated:
            return sweep + 1
    return max_sweeps


def batched_matvec_norms(const double[:, :, :] M, const double[:, :] X):
    """For each k: h_k = M[k] @ X[k]; returns (norms, H, macs)."""
    cdef Py_ssize_t N = M.shape[0], p = M.shape[1], q = M.shape[2]
    cdef Py_ssize_t k, i, j
    cdef double acc, nrm
    cdef long long macs = 0
    H_arr = np.empty((N, p), dtype=np.float64)
    norms_arr = np.empty(N, dtype=np.float64)
    cdef double[:, ::1] H = H_arr
    cdef double[::1] norms = norms_arr
    for k in range(N):
        nrm = 0.0
        for i in range(p):
            acc = 0.0
            for j in range(q):
                acc += M[k, i, j] * X[k, j]
            macs += q
            H[k, i] = acc
            nrm += acc * acc
        norms[k] = sqrt(nrm)
    return norms_arr, H_arr, macs
