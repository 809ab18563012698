"""Shared test oracles, independent of the library code paths they check."""

import itertools

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from scipy.special import gamma as gamma_fn
from scipy.stats import norm

from ivqr.identification import DiscreteMomentSystem


def brute_force_qr_objective(X, y, tau):
    """Exhaustive search over basic solutions (p interpolated observations).

    A bounded LP attains its optimum at a vertex, and every vertex of the
    check-loss program interpolates p observations, so enumerating all
    p-subsets is an exact oracle for small problems.
    """
    n, p = X.shape
    best = np.inf
    best_coef = None
    for subset in itertools.combinations(range(n), p):
        Xs = X[list(subset)]
        try:
            coef = np.linalg.solve(Xs, y[list(subset)])
        except np.linalg.LinAlgError:
            continue
        resid = y - X @ coef
        obj = float(np.sum(resid * (tau - (resid < 0))))
        if obj < best:
            best, best_coef = obj, coef
    return best, best_coef


def chi2_pdf(x, df):
    return x ** (df / 2.0 - 1.0) * np.exp(-x / 2.0) / (2.0 ** (df / 2.0) * gamma_fn(df / 2.0))


def chi2_cdf_by_quadrature(x, df):
    """CDF by adaptive quadrature of the explicit density."""
    if x <= 0:
        return 0.0
    val, _ = quad(chi2_pdf, 0.0, x, args=(df,), limit=200)
    return val


def chi2_quantile_by_quadrature(df, prob):
    hi = float(df)
    while chi2_cdf_by_quadrature(hi, df) < prob:
        hi *= 2.0
    return brentq(lambda t: chi2_cdf_by_quadrature(t, df) - prob, 1e-12, hi, xtol=1e-12)


def a4_face_determinants(J):
    """Hand-coded projected determinants for the binary box-halfspace faces.

    Keyed by the face's spanning subspace: the full plane gives det J,
    span(e1) gives the (z=0, d=0) entry, span(e2) the (z=1, d=1) entry, and
    the diagonal span(e1+e2) half the sum of all four entries.
    """
    return {
        "plane": float(np.linalg.det(J)),
        "e1": float(J[0, 0]),
        "e2": float(J[1, 1]),
        "diagonal": float(J.sum() / 2.0),
    }


def gated_normal_system(tau, mu0=0.0, mu1=1.0, treated_share=0.5):
    """Analytic binary system with P[D=1|Z=0] = 0 and unit-variance arms."""
    probs = np.array([[1.0, 0.0], [1.0 - treated_share, treated_share]])
    mus = (mu0, mu1)

    def density(y, di, zi):
        return norm.pdf(np.asarray(y, dtype=float) - mus[di])

    def cdf(y, di, zi):
        return norm.cdf(np.asarray(y, dtype=float) - mus[di])

    sys = DiscreteMomentSystem.analytic([0, 1], [0, 1], probs, density, cdf, tau)
    q = np.array([mu0 + norm.ppf(tau), mu1 + norm.ppf(tau)])
    return sys, q


def independent_instrument_system(tau, mu0=0.0, mu1=1.0, treated_share=0.4):
    """Analytic binary system with Z independent of (Y, D)."""
    probs = np.array(
        [[1.0 - treated_share, treated_share], [1.0 - treated_share, treated_share]]
    )
    mus = (mu0, mu1)

    def density(y, di, zi):
        return norm.pdf(np.asarray(y, dtype=float) - mus[di])

    def cdf(y, di, zi):
        return norm.cdf(np.asarray(y, dtype=float) - mus[di])

    sys = DiscreteMomentSystem.analytic([0, 1], [0, 1], probs, density, cdf, tau)
    q = np.array([mu0 + norm.ppf(tau), mu1 + norm.ppf(tau)])
    return sys, q


def strong_instrument_system(tau, mu0=0.0, mu1=1.0):
    """Analytic binary system with relevant Z and all cells populated."""
    probs = np.array([[0.8, 0.2], [0.3, 0.7]])
    mus = (mu0, mu1)

    def density(y, di, zi):
        return norm.pdf(np.asarray(y, dtype=float) - mus[di])

    def cdf(y, di, zi):
        return norm.cdf(np.asarray(y, dtype=float) - mus[di])

    sys = DiscreteMomentSystem.analytic([0, 1], [0, 1], probs, density, cdf, tau)
    q = np.array([mu0 + norm.ppf(tau), mu1 + norm.ppf(tau)])
    return sys, q
