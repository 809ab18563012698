"""Chi-square CDF and quantile via the regularized incomplete gamma function."""

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammainc


def chi_square_cdf(x, df: int):
    """P[X <= x] for X chi-square with ``df`` degrees of freedom."""
    if df < 1:
        raise ValueError(f"df must be >= 1, got {df}")
    x = np.asarray(x, dtype=float)
    out = np.where(x > 0.0, gammainc(df / 2.0, np.maximum(x, 0.0) / 2.0), 0.0)
    return float(out) if out.ndim == 0 else out


def chi_square_quantile(df: int, prob: float) -> float:
    """Inverse chi-square CDF by bracketed root search.

    Solves ``chi_square_cdf(x, df) = prob`` with Brent's method to an
    absolute tolerance well below 1e-10.
    """
    if df < 1 or int(df) != df:
        raise ValueError(f"df must be a positive integer, got {df}")
    if not 0.0 < prob < 1.0:
        raise ValueError(f"prob must be in (0, 1), got {prob}")
    hi = max(float(df), 1.0)
    while chi_square_cdf(hi, df) < prob:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("failed to bracket the quantile")
    return float(
        brentq(lambda t: chi_square_cdf(t, df) - prob, 0.0, hi, xtol=1e-12)
    )
