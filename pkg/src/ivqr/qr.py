"""Exogenous quantile regression.

Check-loss minimization over a linear specification via the interior-point
kernel, plus the kernel-sandwich covariance estimator that downstream Wald
statistics are built from.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .exceptions import (
    ConvergenceError,
    NearSingularCovarianceError,
    SingularDesignError,
)
from .solver import solve_qr_program

DEFAULT_TOL = 1e-9
DEFAULT_MAX_ITER = 200

# Singular values below RANK_RTOL * largest count as zero in rank checks.
RANK_RTOL = 1e-10


def check_loss(u, tau: float):
    """Asymmetric absolute loss ``u * (tau - 1[u < 0])``.

    Vectorized; zero exactly at ``u = 0``.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    u = np.asarray(u, dtype=float)
    return u * (tau - (u < 0.0))


def _validate_design(design: np.ndarray) -> None:
    sv = np.linalg.svd(design, compute_uv=False)
    if sv[-1] <= RANK_RTOL * sv[0]:
        raise SingularDesignError(
            f"design is rank deficient (smallest singular value {sv[-1]:.3e})"
        )


@dataclass(frozen=True)
class RegressionProblem:
    """A linear quantile-regression problem.

    ``design`` must have full column rank and at least p + 1 rows.
    """

    design: np.ndarray
    response: np.ndarray
    tau: float

    def __post_init__(self):
        design = np.ascontiguousarray(self.design, dtype=float)
        response = np.ascontiguousarray(self.response, dtype=float).reshape(-1)
        if design.ndim != 2:
            raise ValueError(f"design must be 2-d, got shape {design.shape}")
        n, p = design.shape
        if response.shape[0] != n:
            raise ValueError("design and response row counts differ")
        if n < p + 1:
            raise ValueError(f"need at least p + 1 = {p + 1} observations, got {n}")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must be in (0, 1), got {self.tau}")
        _validate_design(design)
        object.__setattr__(self, "design", design)
        object.__setattr__(self, "response", response)

    @property
    def n(self) -> int:
        return self.design.shape[0]

    @property
    def p(self) -> int:
        return self.design.shape[1]


@dataclass(frozen=True)
class QrFit:
    """Solution of a quantile regression.

    ``covariance`` is the estimated covariance matrix of the coefficient
    vector (kernel sandwich), or None when skipped.
    """

    coefficients: np.ndarray
    residuals: np.ndarray
    objective: float
    covariance: np.ndarray | None
    iterations: int
    gap: float


def fit_qr(
    problem: RegressionProblem,
    bandwidth="auto",
    compute_covariance: bool = True,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> QrFit:
    """Fit the quantile regression by interior-point check-loss minimization.

    Deterministic given identical input.  On degenerate problems (a face of
    minimizers, e.g. the even-n median) the reported coefficients are the
    central-path limit; only the objective value is unique there.

    Raises
    ------
    SingularDesignError
        If the design is rank deficient (via RegressionProblem).
    ConvergenceError
        If the duality-gap tolerance is not met within ``max_iter``.
    """
    coef, iterations, gap, converged = solve_qr_program(
        problem.design, problem.response, problem.tau, tol, max_iter
    )
    if not converged:
        raise ConvergenceError(iterations, gap, tol)
    residuals = problem.response - problem.design @ coef
    objective = float(np.sum(check_loss(residuals, problem.tau)))
    covariance = None
    if compute_covariance:
        covariance = kernel_sandwich_covariance(
            problem.design, residuals, problem.tau, bandwidth
        )
    return QrFit(
        coefficients=coef,
        residuals=residuals,
        objective=objective,
        covariance=covariance,
        iterations=iterations,
        gap=gap,
    )


def qr_covariance(fit: QrFit, problem: RegressionProblem, bandwidth="auto"):
    """Covariance matrix of the fitted coefficients.

    Kernel sandwich tau(1-tau) H^-1 J H^-1 with J the design Gram matrix and
    H the density-weighted Gram matrix, where the density weights come from a
    Gaussian kernel over the residuals.  The default bandwidth follows the
    Hall-Sheather rule at level tau, mapped to the residual scale.
    """
    return kernel_sandwich_covariance(
        problem.design, fit.residuals, problem.tau, bandwidth
    )


def hall_sheather_bandwidth(tau: float, n: int, alpha: float = 0.05) -> float:
    """Hall-Sheather bandwidth on the quantile-probability scale."""
    x0 = norm.ppf(tau)
    f0 = norm.pdf(x0)
    return float(
        n ** (-1.0 / 3.0)
        * norm.ppf(1.0 - alpha / 2.0) ** (2.0 / 3.0)
        * ((1.5 * f0**2) / (2.0 * x0**2 + 1.0)) ** (1.0 / 3.0)
    )


def residual_bandwidth(residuals: np.ndarray, tau: float) -> float:
    """Map the Hall-Sheather probability bandwidth to residual units."""
    n = residuals.shape[0]
    h_tau = hall_sheather_bandwidth(tau, n)
    lo = max(tau - h_tau, 1e-4)
    hi = min(tau + h_tau, 1.0 - 1e-4)
    sd = float(np.std(residuals, ddof=1)) if n > 1 else 0.0
    q75, q25 = np.quantile(residuals, [0.75, 0.25])
    iqr_scale = float(q75 - q25) / 1.34
    candidates = [c for c in (sd, iqr_scale) if c > 0.0]
    # solver-limit residuals on a perfectly fitting model are ~1e-10, not 0
    floor = 1e-9 * (1.0 + float(np.max(np.abs(residuals), initial=0.0)))
    if not candidates or min(candidates) <= floor:
        raise NearSingularCovarianceError(
            "residuals have no usable spread; cannot form a density bandwidth"
        )
    scale = min(candidates)
    return float((norm.ppf(hi) - norm.ppf(lo)) * scale)


def kernel_sandwich_covariance(design, residuals, tau, bandwidth="auto"):
    """Powell-style kernel sandwich for the coefficient covariance."""
    design = np.asarray(design, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    if bandwidth == "auto":
        h = residual_bandwidth(residuals, tau)
    else:
        h = float(bandwidth)
        if h <= 0.0:
            raise ValueError(f"bandwidth must be positive, got {h}")
    t = residuals / h
    weights = np.exp(-0.5 * t * t) / (np.sqrt(2.0 * np.pi) * h)
    H = design.T @ (weights[:, None] * design)
    J = design.T @ design
    try:
        Hinv = np.linalg.inv(H)
    except np.linalg.LinAlgError as exc:
        raise NearSingularCovarianceError(str(exc)) from exc
    if not np.all(np.isfinite(Hinv)) or np.linalg.cond(H) > 1e12:
        raise NearSingularCovarianceError(
            "density-weighted Gram matrix is numerically singular; "
            "weak design or bandwidth too small"
        )
    cov = tau * (1.0 - tau) * Hinv @ J @ Hinv
    return (cov + cov.T) / 2.0


def residual_sign_counts(residuals, zero_tol: float | None = None):
    """Counts of strictly negative and nonpositive residuals.

    Residuals within ``zero_tol`` of zero are classified as zero; the
    default tolerance is far above the solver's optimality gap and far below
    any genuine residual on continuous data, so the subgradient bracket

        #negative <= n * tau <= #nonpositive + p

    is testable exactly on these counts.
    """
    r = np.asarray(residuals, dtype=float)
    if zero_tol is None:
        zero_tol = 1e-6 * (1.0 + float(np.max(np.abs(r), initial=0.0)))
    negative = int(np.sum(r < -zero_tol))
    nonpositive = int(np.sum(r <= zero_tol))
    return negative, nonpositive
