"""Pure-numpy interior-point solver for check-loss minimization.

Fallback used when the compiled kernel is unavailable (or forced via the
``IVQR_PURE_PYTHON`` environment variable).  Implements the same
Mehrotra predictor-corrector iteration as the compiled kernel: the LP dual of
the quantile-regression problem,

    max  y'a   s.t.  X'a = (1 - tau) X'1,   0 <= a <= 1,

whose equality multipliers are (minus) the regression coefficients.  The
start a = (1 - tau) 1 is strictly feasible, so no phase-1 is needed.
"""

import numpy as np

BACKEND = "python"

_STEP_SHRINK = 0.9995
_FLOOR = 1e-14


def solve_qr_program(X, y, tau, tol=1e-9, max_iter=200):
    """Minimize the check loss of ``y - X @ beta`` at quantile ``tau``.

    Returns
    -------
    beta : ndarray of shape (p,)
    iterations : int
    gap : float
        Final scaled duality gap.
    converged : bool
    """
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float).reshape(-1)
    n, p = X.shape
    c = -y
    b = (1.0 - tau) * X.sum(axis=0)

    x = np.full(n, 1.0 - tau)
    s = np.full(n, tau)

    # Dual start: least-squares multipliers, complementary pair floored away
    # from the boundary.
    beta = np.linalg.lstsq(X, c, rcond=None)[0]
    r = c - X @ beta
    shift = 1e-4 + 0.1 * float(np.mean(np.abs(r)))
    z = np.maximum(r, 0.0) + shift
    w = np.maximum(-r, 0.0) + shift

    gap = float(x @ z + s @ w)
    it = 0
    for it in range(1, max_iter + 1):
        gap = float(x @ z + s @ w)
        scale = 1.0 + abs(float(c @ x))
        if gap <= tol * scale:
            return -beta, it - 1, gap / scale, True

        r_b = b - X.T @ x
        r_c = c - X @ beta - z + w
        zx = z / x
        ws = w / s
        d = 1.0 / (zx + ws)

        M = X.T @ (d[:, None] * X)
        try:
            L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            M[np.diag_indices_from(M)] += 1e-12 * (1.0 + np.trace(M) / p)
            L = np.linalg.cholesky(M)

        def _solve_normal(rhs):
            t = np.linalg.solve(L, rhs)
            return np.linalg.solve(L.T, t)

        # Predictor (affine scaling) direction.
        g = d * (r_c + z - w)
        dbeta_a = _solve_normal(r_b + X.T @ g)
        dx_a = d * (X @ dbeta_a - r_c - z + w)
        dz_a = -z - zx * dx_a
        dw_a = -w + ws * dx_a

        ap_a = _step_length(x, s, dx_a)
        ad_a = _dual_step_length(z, w, dz_a, dw_a)
        gap_aff = float(
            (x + ap_a * dx_a) @ (z + ad_a * dz_a)
            + (s - ap_a * dx_a) @ (w + ad_a * dw_a)
        )
        sigma = min(max(gap_aff / gap, 0.0), 1.0) ** 3
        mu = sigma * gap / (2.0 * n)

        # Corrector with Mehrotra cross terms, same factorization.
        v1x = mu / x - z - dx_a * dz_a / x
        v2s = mu / s - w + dx_a * dw_a / s
        g2 = d * (r_c - v1x + v2s)
        dbeta = _solve_normal(r_b + X.T @ g2)
        dx = d * (X @ dbeta + v1x - v2s - r_c)
        dz = v1x - zx * dx
        dw = v2s + ws * dx

        ap = _step_length(x, s, dx)
        ad = _dual_step_length(z, w, dz, dw)

        x = np.maximum(x + ap * dx, _FLOOR)
        s = np.maximum(s - ap * dx, _FLOOR)
        beta = beta + ad * dbeta
        z = np.maximum(z + ad * dz, _FLOOR)
        w = np.maximum(w + ad * dw, _FLOOR)

    gap = float(x @ z + s @ w)
    scale = 1.0 + abs(float(c @ x))
    return -beta, it, gap / scale, gap <= tol * scale


def _step_length(x, s, dx):
    a = 1.0
    neg = dx < 0
    if np.any(neg):
        a = min(a, _STEP_SHRINK * float(np.min(x[neg] / -dx[neg])))
    pos = dx > 0
    if np.any(pos):
        a = min(a, _STEP_SHRINK * float(np.min(s[pos] / dx[pos])))
    return a


def _dual_step_length(z, w, dz, dw):
    a = 1.0
    neg = dz < 0
    if np.any(neg):
        a = min(a, _STEP_SHRINK * float(np.min(z[neg] / -dz[neg])))
    neg = dw < 0
    if np.any(neg):
        a = min(a, _STEP_SHRINK * float(np.min(w[neg] / -dw[neg])))
    return a
