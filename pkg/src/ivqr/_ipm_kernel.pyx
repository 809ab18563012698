# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled interior-point kernel for check-loss minimization.

Same Mehrotra predictor-corrector iteration as ``ivqr._ipm_python``; the
dense O(n p^2) linear algebra is written as straight C loops with a manual
Cholesky factorization of the p x p normal matrix.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs

BACKEND = "compiled"

cdef double STEP_SHRINK = 0.9995
cdef double FLOOR = 1e-14


cdef int _cholesky(double[:, ::1] M, Py_ssize_t p) noexcept nogil:
    """In-place lower Cholesky; returns nonzero on a non-positive pivot."""
    cdef Py_ssize_t i, j, k
    cdef double acc
    for j in range(p):
        acc = M[j, j]
        for k in range(j):
            acc -= M[j, k] * M[j, k]
        if acc <= 0.0:
            return 1
        M[j, j] = acc ** 0.5
        for i in range(j + 1, p):
            acc = M[i, j]
            for k in range(j):
                acc -= M[i, k] * M[j, k]
            M[i, j] = acc / M[j, j]
    return 0


cdef void _chol_solve(double[:, ::1] L, double[::1] rhs, double[::1] out,
                      Py_ssize_t p) noexcept nogil:
    cdef Py_ssize_t i, k
    cdef double acc
    for i in range(p):
        acc = rhs[i]
        for k in range(i):
            acc -= L[i, k] * out[k]
        out[i] = acc / L[i, i]
    for i in range(p - 1, -1, -1):
        acc = out[i]
        for k in range(i + 1, p):
            acc -= L[k, i] * out[k]
        out[i] = acc / L[i, i]


def solve_qr_program(X, y, double tau, double tol=1e-9, int max_iter=200):
    """Minimize the check loss of ``y - X @ beta`` at quantile ``tau``.

    Returns ``(beta, iterations, gap, converged)`` exactly like the pure
    Python backend.
    """
    cdef double[:, ::1] Xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64).reshape(-1)
    cdef Py_ssize_t n = Xv.shape[0], p = Xv.shape[1]
    cdef Py_ssize_t i, j, k, it

    beta_arr = np.empty(p)
    cdef double[::1] beta = beta_arr
    cdef double[::1] x = np.full(n, 1.0 - tau)
    cdef double[::1] s = np.full(n, tau)
    cdef double[::1] z = np.empty(n)
    cdef double[::1] w = np.empty(n)
    cdef double[::1] d = np.empty(n)
    cdef double[::1] r_c = np.empty(n)
    cdef double[::1] dx_a = np.empty(n)
    cdef double[::1] dz_a = np.empty(n)
    cdef double[::1] dw_a = np.empty(n)
    cdef double[::1] dx = np.empty(n)
    cdef double[::1] dz = np.empty(n)
    cdef double[::1] dw = np.empty(n)
    cdef double[::1] v1x = np.empty(n)
    cdef double[::1] v2s = np.empty(n)
    cdef double[::1] b = np.empty(p)
    cdef double[::1] r_b = np.empty(p)
    cdef double[::1] rhs = np.empty(p)
    cdef double[::1] dbeta_a = np.empty(p)
    cdef double[::1] dbeta = np.empty(p)
    cdef double[:, ::1] M = np.empty((p, p))
    cdef double[:, ::1] G = np.empty((p, p))

    cdef double acc, shift, gap, scale, cx, ap, ad, gap_aff, sigma, mu
    cdef double zx_i, ws_i, t, ridge
    cdef bint ok

    # b = (1 - tau) * column sums; initial beta from the normal equations
    # of the least-squares fit of -y on X.
    for j in range(p):
        acc = 0.0
        for i in range(n):
            acc += Xv[i, j]
        b[j] = (1.0 - tau) * acc
    for j in range(p):
        for k in range(p):
            acc = 0.0
            for i in range(n):
                acc += Xv[i, j] * Xv[i, k]
            G[j, k] = acc
        acc = 0.0
        for i in range(n):
            acc -= Xv[i, j] * yv[i]
        rhs[j] = acc
    if _cholesky(G, p):
        # caller guarantees full column rank; nudge and retry once
        for j in range(p):
            for k in range(p):
                acc = 0.0
                for i in range(n):
                    acc += Xv[i, j] * Xv[i, k]
                G[j, k] = acc
            G[j, j] += 1e-10 * (1.0 + G[j, j])
        _cholesky(G, p)
    _chol_solve(G, rhs, beta, p)

    shift = 0.0
    for i in range(n):
        acc = -yv[i]
        for j in range(p):
            acc -= Xv[i, j] * beta[j]
        r_c[i] = acc          # reused as the initial dual residual r
        shift += fabs(acc)
    shift = 1e-4 + 0.1 * shift / n
    for i in range(n):
        if r_c[i] > 0.0:
            z[i] = r_c[i] + shift
            w[i] = shift
        else:
            z[i] = shift
            w[i] = shift - r_c[i]

    gap = 0.0
    it = 0
    for it in range(1, max_iter + 1):
        gap = 0.0
        cx = 0.0
        for i in range(n):
            gap += x[i] * z[i] + s[i] * w[i]
            cx -= yv[i] * x[i]
        scale = 1.0 + fabs(cx)
        if gap <= tol * scale:
            return -beta_arr, it - 1, gap / scale, True

        for j in range(p):
            acc = 0.0
            for i in range(n):
                acc += Xv[i, j] * x[i]
            r_b[j] = b[j] - acc
        for i in range(n):
            acc = -yv[i] - z[i] + w[i]
            for j in range(p):
                acc -= Xv[i, j] * beta[j]
            r_c[i] = acc
            d[i] = 1.0 / (z[i] / x[i] + w[i] / s[i])

        # normal matrix M = X' diag(d) X, factored once per iteration
        for j in range(p):
            for k in range(j, p):
                acc = 0.0
                for i in range(n):
                    acc += Xv[i, j] * d[i] * Xv[i, k]
                M[j, k] = acc
                M[k, j] = acc
        if _cholesky(M, p):
            ridge = 0.0
            for j in range(p):
                for k in range(j, p):
                    acc = 0.0
                    for i in range(n):
                        acc += Xv[i, j] * d[i] * Xv[i, k]
                    M[j, k] = acc
                    M[k, j] = acc
                ridge += M[j, j]
            ridge = 1e-12 * (1.0 + ridge / p)
            for j in range(p):
                M[j, j] += ridge
            if _cholesky(M, p):
                break

        # predictor
        for j in range(p):
            acc = r_b[j]
            for i in range(n):
                acc += Xv[i, j] * d[i] * (r_c[i] + z[i] - w[i])
            rhs[j] = acc
        _chol_solve(M, rhs, dbeta_a, p)
        for i in range(n):
            acc = -r_c[i] - z[i] + w[i]
            for j in range(p):
                acc += Xv[i, j] * dbeta_a[j]
            dx_a[i] = d[i] * acc
            dz_a[i] = -z[i] - (z[i] / x[i]) * dx_a[i]
            dw_a[i] = -w[i] + (w[i] / s[i]) * dx_a[i]

        ap = 1.0
        ad = 1.0
        for i in range(n):
            if dx_a[i] < 0.0:
                t = STEP_SHRINK * x[i] / -dx_a[i]
                if t < ap: ap = t
            elif dx_a[i] > 0.0:
                t = STEP_SHRINK * s[i] / dx_a[i]
                if t < ap: ap = t
            if dz_a[i] < 0.0:
                t = STEP_SHRINK * z[i] / -dz_a[i]
                if t < ad: ad = t
            if dw_a[i] < 0.0:
                t = STEP_SHRINK * w[i] / -dw_a[i]
                if t < ad: ad = t

        gap_aff = 0.0
        for i in range(n):
            gap_aff += (x[i] + ap * dx_a[i]) * (z[i] + ad * dz_a[i]) \
                     + (s[i] - ap * dx_a[i]) * (w[i] + ad * dw_a[i])
        sigma = gap_aff / gap
        if sigma < 0.0: sigma = 0.0
        if sigma > 1.0: sigma = 1.0
        sigma = sigma * sigma * sigma
        mu = sigma * gap / (2.0 * n)

        # corrector
        for i in range(n):
            v1x[i] = mu / x[i] - z[i] - dx_a[i] * dz_a[i] / x[i]
            v2s[i] = mu / s[i] - w[i] + dx_a[i] * dw_a[i] / s[i]
        for j in range(p):
            acc = r_b[j]
            for i in range(n):
                acc += Xv[i, j] * d[i] * (r_c[i] - v1x[i] + v2s[i])
            rhs[j] = acc
        _chol_solve(M, rhs, dbeta, p)
        for i in range(n):
            acc = v1x[i] - v2s[i] - r_c[i]
            for j in range(p):
                acc += Xv[i, j] * dbeta[j]
            dx[i] = d[i] * acc
            dz[i] = v1x[i] - (z[i] / x[i]) * dx[i]
            dw[i] = v2s[i] + (w[i] / s[i]) * dx[i]

        ap = 1.0
        ad = 1.0
        for i in range(n):
            if dx[i] < 0.0:
                t = STEP_SHRINK * x[i] / -dx[i]
                if t < ap: ap = t
            elif dx[i] > 0.0:
                t = STEP_SHRINK * s[i] / dx[i]
                if t < ap: ap = t
            if dz[i] < 0.0:
                t = STEP_SHRINK * z[i] / -dz[i]
                if t < ad: ad = t
            if dw[i] < 0.0:
                t = STEP_SHRINK * w[i] / -dw[i]
                if t < ad: ad = t

        for i in range(n):
            x[i] += ap * dx[i]
            if x[i] < FLOOR: x[i] = FLOOR
            s[i] -= ap * dx[i]
            if s[i] < FLOOR: s[i] = FLOOR
            z[i] += ad * dz[i]
            if z[i] < FLOOR: z[i] = FLOOR
            w[i] += ad * dw[i]
            if w[i] < FLOOR: w[i] = FLOOR
        for j in range(p):
            beta[j] += ad * dbeta[j]

    gap = 0.0
    cx = 0.0
    for i in range(n):
        gap += x[i] * z[i] + s[i] * w[i]
        cx -= yv[i] * x[i]
    scale = 1.0 + fabs(cx)
    return -beta_arr, it, gap / scale, gap <= tol * scale
