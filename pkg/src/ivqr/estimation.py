"""Inverse quantile regression.

Grid search over the endogenous coefficient: at each candidate the outcome
net of the candidate effect is quantile-regressed on the exogenous
covariates and the instruments, and the Wald statistic for zero instrument
coefficients is recorded.  The grid argmin is the point estimate; sub-level
sets of the Wald profile are confidence regions that stay valid under weak
or failed identification.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chisq import chi_square_quantile
from .dataset import QuantileDataset
from .exceptions import (
    ConfigError,
    ConvergenceError,
    EstimationFailedError,
    NearSingularCovarianceError,
    SingularDesignError,
    UnreliableVarianceError,
)
from .qr import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    _validate_design,
    kernel_sandwich_covariance,
)
from .solver import solve_qr_program

MAX_ENDOGENOUS_DIM = 2


@dataclass(frozen=True)
class LinearIvqrSpec:
    """Specification of the linear structural quantile model.

    Column roles default to the dataset's own role assignment; indices are
    dataset column positions and can be overridden to subset instruments or
    regressors.  An intercept is always included among the exogenous terms.
    """

    tau: float
    endogenous_cols: tuple[int, ...] | None = None
    exogenous_cols: tuple[int, ...] | None = None
    instrument_cols: tuple[int, ...] | None = None

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ConfigError(f"tau must be in (0, 1), got {self.tau}")

    def resolve(self, data: QuantileDataset):
        """Return (y, D, X, Z) arrays for a dataset, validating the roles."""
        d_cols = self.endogenous_cols if self.endogenous_cols is not None else data.d_cols
        x_cols = self.exogenous_cols if self.exogenous_cols is not None else data.x_cols
        z_cols = self.instrument_cols if self.instrument_cols is not None else data.z_cols
        d_cols, x_cols, z_cols = tuple(d_cols), tuple(x_cols), tuple(z_cols)
        if not d_cols:
            raise ConfigError("no endogenous columns")
        if not z_cols:
            raise ConfigError("no instrument columns")
        all_cols = (data.y_col, *d_cols, *x_cols, *z_cols)
        if len(set(all_cols)) != len(all_cols):
            raise ConfigError("column roles overlap")
        if len(z_cols) < len(d_cols):
            raise ConfigError(
                f"order condition fails: {len(z_cols)} instruments for "
                f"{len(d_cols)} endogenous regressors"
            )
        m = data.matrix
        return (
            m[:, data.y_col],
            m[:, list(d_cols)],
            m[:, list(x_cols)],
            m[:, list(z_cols)],
        )


@dataclass(frozen=True)
class IqrProfile:
    """Wald profile over a grid of candidate endogenous coefficients.

    ``grid`` has one row per candidate (columns are endogenous dimensions).
    Invalid grid points (singular covariance block or solver failure) carry
    NaN in ``wald`` and False in ``valid``; they are excluded from
    minimization and listed in ``diagnostics``.
    """

    grid: np.ndarray
    wald: np.ndarray
    betas: np.ndarray
    gammas: np.ndarray
    valid: np.ndarray
    tau: float
    dim_z: int
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        J = self.grid.shape[0]
        for name in ("wald", "betas", "gammas", "valid"):
            if getattr(self, name).shape[0] != J:
                raise ValueError(f"{name} length differs from grid length")
        w = self.wald[self.valid]
        if w.size and not (np.all(np.isfinite(w)) and np.all(w >= 0.0)):
            raise ValueError("valid Wald entries must be finite and nonnegative")

    @property
    def n_valid(self) -> int:
        return int(np.sum(self.valid))

    def to_dict(self) -> dict:
        """JSON-ready export (grid, Wald values, coefficients)."""
        return {
            "tau": self.tau,
            "dim_z": self.dim_z,
            "grid": self.grid.tolist(),
            "wald": [w if np.isfinite(w) else None for w in self.wald.tolist()],
            "betas": self.betas.tolist(),
            "gammas": self.gammas.tolist(),
            "valid": self.valid.tolist(),
            "diagnostics": self.diagnostics,
        }


@dataclass(frozen=True)
class ConfidenceRegion:
    """Sub-level set of the Wald profile at a fixed confidence level."""

    level: float
    threshold: float
    alphas: np.ndarray  # (m, dim_d) grid points inside the region
    grid: np.ndarray
    step: float

    @property
    def is_empty(self) -> bool:
        return self.alphas.shape[0] == 0

    @property
    def n_points(self) -> int:
        return self.alphas.shape[0]

    @property
    def fraction_of_grid(self) -> float:
        return self.alphas.shape[0] / max(self.grid.shape[0], 1)

    @property
    def width(self) -> float:
        """One-dimensional Lebesgue measure: point count times grid step."""
        if self.grid.shape[1] != 1:
            raise ValueError("width is defined for one endogenous dimension")
        return self.alphas.shape[0] * self.step

    def covers(self, alpha) -> bool:
        """True if ``alpha`` is within half a grid step of a region point."""
        if self.is_empty:
            return False
        a = np.atleast_1d(np.asarray(alpha, dtype=float))
        dist = np.max(np.abs(self.alphas - a[None, :]), axis=1)
        return bool(np.min(dist) <= self.step / 2.0 + 1e-12)


@dataclass(frozen=True)
class IvqrEstimate:
    """Point estimate with optional inverted-test confidence region."""

    alpha_hat: np.ndarray
    beta_hat: np.ndarray
    gamma_hat: np.ndarray
    wald_min: float
    index: int
    ci: ConfidenceRegion | None
    grid_resolution: float
    boundary_warning: bool
    local_minima: list
    tau: float


def _grid_step(grid: np.ndarray) -> float:
    steps = []
    for k in range(grid.shape[1]):
        u = np.unique(grid[:, k])
        if u.size > 1:
            steps.append(float(np.min(np.diff(u))))
    return min(steps) if steps else 0.0


def product_grid(axes) -> np.ndarray:
    """Cartesian product of per-dimension 1-d candidate arrays."""
    axes = [np.asarray(a, dtype=float).reshape(-1) for a in axes]
    if len(axes) > MAX_ENDOGENOUS_DIM:
        raise ConfigError(
            f"grid search supports at most {MAX_ENDOGENOUS_DIM} endogenous "
            f"dimensions, got {len(axes)}"
        )
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.reshape(-1) for m in mesh])


def _coerce_grid(grid, dim_d: int) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if g.ndim != 2 or g.shape[1] != dim_d:
        raise ConfigError(
            f"grid must have one column per endogenous dimension ({dim_d}), "
            f"got shape {g.shape}"
        )
    if g.shape[0] == 0:
        raise ConfigError("grid is empty")
    return g


def two_stage_least_squares(data: QuantileDataset, spec: LinearIvqrSpec):
    """2SLS point estimate and standard errors for the endogenous block.

    Only used to center and scale the default grid; quantile-specific
    estimation never relies on it.
    """
    y, D, X, Z = spec.resolve(data)
    n = y.shape[0]
    ones = np.ones((n, 1))
    W1 = np.hstack([ones, X, Z])
    Dhat = W1 @ np.linalg.lstsq(W1, D, rcond=None)[0]
    X2 = np.hstack([ones, X, Dhat])
    theta = np.linalg.lstsq(X2, y, rcond=None)[0]
    k_d = D.shape[1]
    alpha = theta[-k_d:]
    resid = y - np.hstack([ones, X, D]) @ theta
    dof = max(n - X2.shape[1], 1)
    sigma2 = float(resid @ resid) / dof
    try:
        cov = sigma2 * np.linalg.inv(X2.T @ X2)
        se = np.sqrt(np.clip(np.diag(cov)[-k_d:], 0.0, np.inf))
    except np.linalg.LinAlgError:
        se = np.full(k_d, np.nan)
    return alpha, se


def default_grid(
    data: QuantileDataset,
    spec: LinearIvqrSpec,
    num_points: int | None = None,
    span: float = 5.0,
) -> np.ndarray:
    """Grid centered at the 2SLS coefficient, +- ``span`` standard errors.

    201 points for one endogenous dimension, 41 per dimension for two.  If
    the truth lies outside this range the profile argmin lands on the grid
    edge and the estimate carries a boundary warning.
    """
    _, D, _, _ = spec.resolve(data)
    k_d = D.shape[1]
    if k_d > MAX_ENDOGENOUS_DIM:
        raise ConfigError(
            f"grid search supports at most {MAX_ENDOGENOUS_DIM} endogenous "
            f"dimensions, got {k_d}"
        )
    if num_points is None:
        num_points = 201 if k_d == 1 else 41
    alpha, se = two_stage_least_squares(data, spec)
    se = np.where(np.isfinite(se) & (se > 0), se, np.maximum(np.abs(alpha), 1.0))
    axes = [
        np.linspace(alpha[k] - span * se[k], alpha[k] + span * se[k], num_points)
        for k in range(k_d)
    ]
    return product_grid(axes)


def _profile_point(design, y, D, alpha_j, tau, z_slice, bandwidth, tol, max_iter):
    """One grid evaluation: returns (beta, gamma, wald) or an error string."""
    resp = y - D @ alpha_j
    coef, iterations, gap, converged = solve_qr_program(design, resp, tau, tol, max_iter)
    if not converged:
        return None, None, np.nan, f"no convergence ({iterations} iterations)"
    resid = resp - design @ coef
    try:
        cov = kernel_sandwich_covariance(design, resid, tau, bandwidth)
    except NearSingularCovarianceError as exc:
        return None, None, np.nan, f"singular covariance: {exc}"
    gamma = coef[z_slice]
    A = cov[z_slice, z_slice]
    try:
        L = np.linalg.cholesky(A)
        half = np.linalg.solve(L, gamma)
        wald = float(half @ half)
    except np.linalg.LinAlgError:
        return None, None, np.nan, "singular instrument covariance block"
    beta = coef[: z_slice.start]
    return beta, gamma, max(wald, 0.0), None


def build_profile(
    data: QuantileDataset,
    spec: LinearIvqrSpec,
    grid=None,
    bandwidth="auto",
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    n_jobs: int = 1,
) -> IqrProfile:
    """Evaluate the Wald profile over a grid of endogenous coefficients.

    For each candidate, the outcome net of the candidate effect is
    quantile-regressed on the exogenous covariates and instruments; the Wald
    statistic for zero instrument coefficients uses the instrument block of
    the kernel-sandwich covariance.  Grid points where that block is singular
    are flagged invalid and skipped, not fatal.

    Grid evaluations are independent; with ``n_jobs > 1`` they run on a
    thread pool and are merged in grid order, so results do not depend on
    scheduling.
    """
    y, D, X, Z = spec.resolve(data)
    n = y.shape[0]
    k_d, k_x, k_z = D.shape[1], X.shape[1], Z.shape[1]
    if n <= k_x + k_z + 1:
        raise ConfigError(
            f"need n > dim(X) + dim(Z) + 1 = {k_x + k_z + 1}, got n = {n}"
        )
    if grid is None:
        grid = default_grid(data, spec)
    grid = _coerce_grid(grid, k_d)

    design = np.ascontiguousarray(np.hstack([np.ones((n, 1)), X, Z]))
    _validate_design(design)
    z_slice = slice(1 + k_x, 1 + k_x + k_z)

    J = grid.shape[0]
    wald = np.full(J, np.nan)
    betas = np.zeros((J, 1 + k_x))
    gammas = np.zeros((J, k_z))
    valid = np.zeros(J, dtype=bool)
    failures = {}

    def run(j):
        return _profile_point(
            design, y, D, grid[j], spec.tau, z_slice, bandwidth, tol, max_iter
        )

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(run, range(J)))
    else:
        results = [run(j) for j in range(J)]

    for j, (beta, gamma, w, err) in enumerate(results):
        if err is None:
            betas[j] = beta
            gammas[j] = gamma
            wald[j] = w
            valid[j] = True
        else:
            failures[j] = err

    diagnostics = {
        "n_invalid": len(failures),
        "invalid_points": {
            int(j): {"alpha": grid[j].tolist(), "reason": msg}
            for j, msg in failures.items()
        },
    }
    return IqrProfile(
        grid=grid,
        wald=wald,
        betas=betas,
        gammas=gammas,
        valid=valid,
        tau=spec.tau,
        dim_z=k_z,
        diagnostics=diagnostics,
    )


def _local_minima(profile: IqrProfile, threshold: float):
    """Strict interior local minima of a one-dimensional Wald profile."""
    if profile.grid.shape[1] != 1:
        return []
    order = np.argsort(profile.grid[:, 0], kind="stable")
    w = profile.wald[order]
    g = profile.grid[order, 0]
    ok = profile.valid[order]
    out = []
    for i in range(1, len(w) - 1):
        if not (ok[i - 1] and ok[i] and ok[i + 1]):
            continue
        if w[i] < w[i - 1] and w[i] < w[i + 1] and w[i] <= threshold:
            out.append({"alpha": [float(g[i])], "wald": float(w[i])})
    return out


def estimate(profile: IqrProfile, level: float | None = None) -> IvqrEstimate:
    """Grid argmin of the Wald profile; ties go to the smallest candidate
    in lexicographic order.

    If ``level`` is given, the matching confidence region is attached and
    contains the point estimate whenever the region is nonempty and the
    minimum lies under its threshold.
    """
    if profile.n_valid == 0:
        raise EstimationFailedError("every grid point is invalid")
    wald = np.where(profile.valid, profile.wald, np.inf)
    wmin = float(np.min(wald))
    ties = np.flatnonzero(wald == wmin)
    keys = tuple(profile.grid[ties, k] for k in range(profile.grid.shape[1] - 1, -1, -1))
    idx = int(ties[np.lexsort(keys)[0]])

    boundary = False
    for k in range(profile.grid.shape[1]):
        col = profile.grid[:, k]
        if np.isclose(profile.grid[idx, k], col.min()) or np.isclose(
            profile.grid[idx, k], col.max()
        ):
            boundary = True

    half_threshold = chi_square_quantile(profile.dim_z, 0.5)
    ci = robust_confidence_region(profile, level) if level is not None else None
    return IvqrEstimate(
        alpha_hat=profile.grid[idx].copy(),
        beta_hat=profile.betas[idx].copy(),
        gamma_hat=profile.gammas[idx].copy(),
        wald_min=wmin,
        index=idx,
        ci=ci,
        grid_resolution=_grid_step(profile.grid),
        boundary_warning=boundary,
        local_minima=_local_minima(profile, half_threshold),
        tau=profile.tau,
    )


def robust_confidence_region(profile: IqrProfile, level: float) -> ConfidenceRegion:
    """All grid points whose Wald statistic is below the chi-square cutoff.

    Valid whether identification is strong, weak, or absent; the region may
    be empty, disconnected, or the whole grid, and all three are legitimate
    outcomes rather than errors.
    """
    if not 0.0 < level < 1.0:
        raise ConfigError(f"level must be in (0, 1), got {level}")
    threshold = chi_square_quantile(profile.dim_z, level)
    mask = profile.valid & (profile.wald <= threshold)
    return ConfidenceRegion(
        level=level,
        threshold=threshold,
        alphas=profile.grid[mask].copy(),
        grid=profile.grid,
        step=_grid_step(profile.grid),
    )


def variance_by_subsampling(
    data: QuantileDataset,
    spec: LinearIvqrSpec,
    grid,
    block_size: int,
    replications: int = 200,
    seed: int = 0,
    bandwidth="auto",
):
    """Covariance of (alpha_hat, beta_hat) by m-out-of-n subsampling.

    Deterministic given the seed.  Raises UnreliableVarianceError when more
    than 20 percent of the subsample estimations fail.
    """
    n = data.n
    if not 0 < block_size < n:
        raise ConfigError(f"block_size must be in (0, n={n}), got {block_size}")
    if replications < 50:
        raise ConfigError(f"need at least 50 replications, got {replications}")
    grid = _coerce_grid(grid, spec.resolve(data)[1].shape[1])

    full = estimate(build_profile(data, spec, grid, bandwidth=bandwidth))
    center = np.concatenate([full.alpha_hat, full.beta_hat])

    rng = np.random.Generator(np.random.Philox(seed))
    draws = []
    failed = 0
    for _ in range(replications):
        rows = rng.choice(n, size=block_size, replace=False)
        try:
            sub = estimate(build_profile(data.subset(rows), spec, grid, bandwidth=bandwidth))
            draws.append(np.concatenate([sub.alpha_hat, sub.beta_hat]))
        except (
            EstimationFailedError,
            SingularDesignError,
            ConvergenceError,
            NearSingularCovarianceError,
            ConfigError,
        ):
            failed += 1
    if failed > 0.2 * replications:
        raise UnreliableVarianceError(
            f"{failed} of {replications} subsample estimations failed"
        )
    dev = np.asarray(draws) - center[None, :]
    cov = (block_size / n) * (dev.T @ dev) / len(draws)
    return (cov + cov.T) / 2.0
