"""Seeded structural data generators with known ground truth.

Three families: a supply-demand equilibrium model with non-separable
demand error (log-linear structural quantiles), a binary-treatment model
with configurable rank behavior (exact invariance, noisy-but-similar ranks,
or a match-rate violation of similarity), and a linear location-scale
benchmark with dial-in endogeneity and instrument strength.

All generators use counter-based Philox streams keyed by the user seed, so
identical (parameters, n, seed) reproduce datasets bit for bit, and Monte
Carlo replications can spawn independent per-replication streams that do
not depend on execution order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .dataset import QuantileDataset
from .exceptions import DataError, EquilibriumError, InvalidDgpError

DEFAULT_TAU_GRID = np.round(np.arange(0.05, 0.96, 0.05), 10)


def rng_from_seed(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def replication_seeds(seed: int, replications: int):
    """Independent child seeds, stable across serial or parallel execution."""
    return np.random.SeedSequence(seed).spawn(replications)


# ---------------------------------------------------------------------------
# ground truth


@dataclass(frozen=True)
class TruthRecord:
    """Serializable description of the true structural quantile function."""

    kind: str
    params: dict
    tau_grid: np.ndarray
    alpha_values: np.ndarray | None = None
    beta_values: np.ndarray | None = None

    def structural_quantile(self, d, tau: float):
        """True tau-quantile of the potential outcome at treatment value d.

        For the demand model, d is log price and the quantile is on the log
        scale, matching the estimation-ready columns.
        """
        d = np.asarray(d, dtype=float)
        p = self.params
        if self.kind == "location_scale":
            return (p["b0"] + p["b1"] * norm.ppf(tau)) + d * (p["a0"] + p["a1"] * tau)
        if self.kind == "demand":
            return (p["b0"] + p["b1"] * tau) + d * (p["a0"] + p["a1"] * tau)
        if self.kind == "binary":
            loc0, loc1 = p["locations"]
            s0, s1 = p["scales"]
            return loc0 + d * (loc1 - loc0) + (s0 + d * (s1 - s0)) * norm.ppf(tau)
        raise ValueError(f"unknown truth kind {self.kind!r}")

    def alpha(self, tau: float) -> float:
        """True endogenous coefficient at tau (slope of d)."""
        p = self.params
        if self.kind in ("location_scale", "demand"):
            return p["a0"] + p["a1"] * tau
        if self.kind == "binary":
            loc0, loc1 = p["locations"]
            s0, s1 = p["scales"]
            return (loc1 - loc0) + (s1 - s0) * norm.ppf(tau)
        raise ValueError(f"unknown truth kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": {
                k: (list(v) if isinstance(v, (tuple, list)) else v)
                for k, v in self.params.items()
            },
            "tau_grid": self.tau_grid.tolist(),
            "alpha_values": None if self.alpha_values is None else self.alpha_values.tolist(),
            "beta_values": None if self.beta_values is None else self.beta_values.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TruthRecord":
        return cls(
            kind=d["kind"],
            params=d["params"],
            tau_grid=np.asarray(d["tau_grid"], dtype=float),
            alpha_values=None
            if d.get("alpha_values") is None
            else np.asarray(d["alpha_values"], dtype=float),
            beta_values=None
            if d.get("beta_values") is None
            else np.asarray(d["beta_values"], dtype=float),
        )


@dataclass(frozen=True)
class SimulatedDataset:
    """Dataset plus ground truth and the latent draws behind it."""

    data: QuantileDataset
    truth: TruthRecord
    seed: int
    latents: dict = field(default_factory=dict, compare=False)


# ---------------------------------------------------------------------------
# location-scale benchmark


@dataclass(frozen=True)
class LocationScaleDgp:
    """Y = beta(U) + D alpha(U) with D = pi Z + rho qnorm(U) + nu.

    alpha(tau) = a0 + a1 tau, beta(tau) = b0 + b1 qnorm(tau).  rho controls
    endogeneity, pi instrument strength (pi = 0 kills identification).
    The outcome quantile function must be increasing in tau over the
    declared treatment range; violations are rejected at construction.
    """

    alpha: tuple = (0.75, 0.5)
    beta: tuple = (0.0, 1.0)
    endogeneity: float = 0.5
    instrument_strength: float = 1.0
    selection_noise: float = 0.5
    covariate_coef: float | None = None
    d_range: tuple = (-4.0, 4.0)

    def __post_init__(self):
        a0, a1 = self.alpha
        b0, b1 = self.beta
        taus = np.linspace(0.005, 0.995, 199)
        ds = np.linspace(self.d_range[0], self.d_range[1], 81)
        slope = a1 * ds[:, None] + b1 / norm.pdf(norm.ppf(taus))[None, :]
        if np.min(slope) <= 0.0:
            raise InvalidDgpError(
                "d alpha(tau) + beta(tau) is not increasing in tau over the "
                f"declared treatment range {self.d_range}"
            )

    def truth(self, tau_grid=DEFAULT_TAU_GRID) -> TruthRecord:
        a0, a1 = self.alpha
        b0, b1 = self.beta
        tau_grid = np.asarray(tau_grid, dtype=float)
        return TruthRecord(
            kind="location_scale",
            params={
                "a0": a0,
                "a1": a1,
                "b0": b0,
                "b1": b1,
                "endogeneity": self.endogeneity,
                "instrument_strength": self.instrument_strength,
            },
            tau_grid=tau_grid,
            alpha_values=a0 + a1 * tau_grid,
            beta_values=b0 + b1 * norm.ppf(tau_grid),
        )


def simulate_location_scale(
    dgp: LocationScaleDgp, n: int, seed: int, tau_grid=DEFAULT_TAU_GRID
) -> SimulatedDataset:
    a0, a1 = dgp.alpha
    b0, b1 = dgp.beta
    rng = rng_from_seed(seed)
    u = rng.uniform(size=n)
    z = rng.normal(size=n)
    nu = rng.normal(size=n)
    d = dgp.instrument_strength * z + dgp.endogeneity * norm.ppf(u) + dgp.selection_noise * nu
    y = (b0 + b1 * norm.ppf(u)) + d * (a0 + a1 * u)
    x = None
    if dgp.covariate_coef is not None:
        x = rng.normal(size=n)
        y = y + dgp.covariate_coef * x
    data = QuantileDataset.from_arrays(y=y, d=d, z=z, x=x)
    return SimulatedDataset(
        data=data, truth=dgp.truth(tau_grid), seed=seed, latents={"u": u, "nu": nu}
    )


# ---------------------------------------------------------------------------
# supply-demand equilibrium


@dataclass(frozen=True)
class DemandDgp:
    """Cobb-Douglas demand with non-separable error, log-linear supply.

    Log demand at price p and demand state u is beta(u) + alpha(u) log p
    with alpha(u) = a0 + a1 u < 0 and beta(u) = b0 + b1 u.  Log supply is
    s0 + s_p log p + s_z Z + s_noise W with s_p > 0, so the market-clearing
    price is unique.  Z shifts supply only, leaving the demand state alone.
    """

    alpha: tuple = (-2.0, 1.5)
    beta: tuple = (1.0, 2.0)
    supply_elasticity: float = 2.0
    supply_intercept: float = 0.0
    instrument_coef: float = 1.2
    supply_noise_scale: float = 0.3
    instrument_dist: str = "uniform"
    noise_dist: str = "uniform"
    price_support: tuple = (0.4, 7.0)

    def __post_init__(self):
        a0, a1 = self.alpha
        b0, b1 = self.beta
        if self.supply_elasticity <= 0.0:
            raise InvalidDgpError("supply must be increasing in price")
        taus = np.linspace(0.0, 1.0, 101)
        if np.max(a0 + a1 * taus) >= 0.0:
            raise InvalidDgpError("demand elasticity must stay negative")
        logp = np.log(np.linspace(self.price_support[0], self.price_support[1], 101))
        # d/dtau of beta(tau) + alpha(tau) log p on the declared support;
        # a flat (degenerate-randomness) demand state is allowed, a
        # decreasing one is not
        if np.min(b1 + a1 * logp) < 0.0:
            raise InvalidDgpError(
                "log demand is decreasing in the demand state somewhere on "
                f"the declared price support {self.price_support}"
            )

    def truth(self, tau_grid=DEFAULT_TAU_GRID) -> TruthRecord:
        a0, a1 = self.alpha
        b0, b1 = self.beta
        tau_grid = np.asarray(tau_grid, dtype=float)
        return TruthRecord(
            kind="demand",
            params={"a0": a0, "a1": a1, "b0": b0, "b1": b1},
            tau_grid=tau_grid,
            alpha_values=a0 + a1 * tau_grid,
            beta_values=b0 + b1 * tau_grid,
        )


def _draw(dist: str, rng, n: int) -> np.ndarray:
    if dist == "uniform":
        return rng.uniform(-1.0, 1.0, size=n)
    if dist == "normal":
        return rng.normal(size=n)
    raise InvalidDgpError(f"unknown distribution {dist!r}")


def simulate_demand(
    dgp: DemandDgp, n: int, seed: int, tau_grid=DEFAULT_TAU_GRID
) -> SimulatedDataset:
    """Draw the demand state, solve each observation's market clearing price
    by bracketed bisection (tolerance 1e-10 on log price), and record both
    level and log columns.

    The estimation-ready roles are y = log quantity, d = log price,
    z = instrument.
    """
    a0, a1 = dgp.alpha
    b0, b1 = dgp.beta
    rng = rng_from_seed(seed)
    u = rng.uniform(size=n)
    z = _draw(dgp.instrument_dist, rng, n)
    w = _draw(dgp.noise_dist, rng, n)

    alpha_u = a0 + a1 * u
    beta_u = b0 + b1 * u
    supply_shift = dgp.supply_intercept + dgp.instrument_coef * z + dgp.supply_noise_scale * w

    def excess_supply(logp):
        return (supply_shift + dgp.supply_elasticity * logp) - (beta_u + alpha_u * logp)

    lo = np.full(n, -30.0)
    hi = np.full(n, 30.0)
    for _ in range(6):
        bad_lo = excess_supply(lo) > 0.0
        bad_hi = excess_supply(hi) < 0.0
        if not (bad_lo.any() or bad_hi.any()):
            break
        lo[bad_lo] *= 2.0
        hi[bad_hi] *= 2.0
    else:
        bad = np.flatnonzero((excess_supply(lo) > 0.0) | (excess_supply(hi) < 0.0))
        raise EquilibriumError(
            f"no clearing-price bracket for observation {int(bad[0])}"
        )
    # bisect to tolerance 1e-10 (interval shrinks by 2^-k)
    iters = int(np.ceil(np.log2((hi - lo).max() / 1e-10)))
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        high = excess_supply(mid) > 0.0
        hi = np.where(high, mid, hi)
        lo = np.where(high, lo, mid)
    logp = 0.5 * (lo + hi)
    logq = beta_u + alpha_u * logp

    matrix = np.column_stack([np.exp(logq), np.exp(logp), logq, logp, z])
    data = QuantileDataset(
        matrix=matrix,
        column_names=("quantity", "price", "log_quantity", "log_price", "z"),
        y_col=2,
        d_cols=(3,),
        z_cols=(4,),
        meta={"dgp": "demand"},
    )
    return SimulatedDataset(
        data=data,
        truth=dgp.truth(tau_grid),
        seed=seed,
        latents={"u": u, "supply_noise": w},
    )


# ---------------------------------------------------------------------------
# binary treatment


@dataclass(frozen=True)
class BinaryTreatmentDgp:
    """Binary treatment and instrument with configurable rank behavior.

    Ranks are built from a mean preference V: under ``invariant`` the rank
    is U = Phi(V / v_scale) in both arms; under ``similar_slippage`` each arm
    adds an iid noise eta_d before mapping through the marginal CDF, which
    preserves similarity; under ``violated_match`` only the treated arm adds
    a match shock M, so the treated rank distribution conditional on V is
    not the untreated one.  Selection is a threshold in (Z, V): D = 1 when
    sel_intercept + sel_z Z + sel_v V + sel_noise V2 > 0, or gated by the
    instrument (D = Z * indicator) to produce P[D=1|Z=0] = 0 exactly.

    Outcome arm d has quantile function locations[d] + scales[d] qnorm(tau).
    """

    rank_mode: str = "invariant"
    v_scale: float = 1.0
    eta_scale: float = 0.5
    match_scale: float = 2.0
    locations: tuple = (0.0, 1.0)
    scales: tuple = (1.0, 1.0)
    sel_intercept: float = -0.75
    sel_z: float = 1.5
    sel_v: float = 1.0
    sel_noise: float = 0.5
    z_prob: float = 0.5
    gate_by_instrument: bool = False

    def __post_init__(self):
        if self.rank_mode not in ("invariant", "similar_slippage", "violated_match"):
            raise InvalidDgpError(f"unknown rank mode {self.rank_mode!r}")
        if not 0.0 < self.z_prob < 1.0:
            raise InvalidDgpError(f"z_prob must be in (0, 1), got {self.z_prob}")
        if min(self.scales) <= 0.0:
            raise InvalidDgpError("outcome scales must be positive")

    def truth(self, tau_grid=DEFAULT_TAU_GRID) -> TruthRecord:
        tau_grid = np.asarray(tau_grid, dtype=float)
        return TruthRecord(
            kind="binary",
            params={
                "locations": tuple(self.locations),
                "scales": tuple(self.scales),
                "rank_mode": self.rank_mode,
            },
            tau_grid=tau_grid,
        )


def simulate_binary(
    dgp: BinaryTreatmentDgp, n: int, seed: int, tau_grid=DEFAULT_TAU_GRID
) -> SimulatedDataset:
    rng = rng_from_seed(seed)
    v = rng.normal(scale=dgp.v_scale, size=n)
    z = (rng.uniform(size=n) < dgp.z_prob).astype(float)
    v2 = rng.normal(size=n)

    if dgp.rank_mode == "invariant":
        u0 = u1 = norm.cdf(v / dgp.v_scale)
    elif dgp.rank_mode == "similar_slippage":
        eta0 = rng.normal(scale=dgp.eta_scale, size=n)
        eta1 = rng.normal(scale=dgp.eta_scale, size=n)
        total = np.hypot(dgp.v_scale, dgp.eta_scale)
        u0 = norm.cdf((v + eta0) / total)
        u1 = norm.cdf((v + eta1) / total)
    else:  # violated_match: eta_d = d * M
        m = rng.normal(scale=dgp.match_scale, size=n)
        u0 = norm.cdf(v / dgp.v_scale)
        u1 = norm.cdf((v + m) / np.hypot(dgp.v_scale, dgp.match_scale))

    latent_sel = dgp.sel_intercept + dgp.sel_v * v + dgp.sel_noise * v2
    if dgp.gate_by_instrument:
        d = z * (latent_sel > 0.0)
    else:
        d = ((latent_sel + dgp.sel_z * z) > 0.0).astype(float)

    u = np.where(d > 0.5, u1, u0)
    loc = np.asarray(dgp.locations)
    scale = np.asarray(dgp.scales)
    di = d.astype(int)
    y = loc[di] + scale[di] * norm.ppf(u)

    data = QuantileDataset.from_arrays(y=y, d=d, z=z)
    return SimulatedDataset(
        data=data,
        truth=dgp.truth(tau_grid),
        seed=seed,
        latents={"u": u, "u0": u0, "u1": u1, "v": v},
    )


# ---------------------------------------------------------------------------
# moment-restriction validator


@dataclass(frozen=True)
class MomentRestrictionReport:
    """Cell-by-cell deviations of P[Y <= q_true(D, tau) | Z cell] from tau."""

    deviations: np.ndarray  # (n_cells, n_taus)
    thresholds: np.ndarray  # (n_cells,)
    cell_sizes: np.ndarray
    cell_labels: tuple
    tau_grid: np.ndarray
    passed: bool

    @property
    def max_abs_deviation(self) -> float:
        return float(np.max(self.deviations))


def validate_moment_restriction(
    sim: SimulatedDataset,
    tau_grid=(0.25, 0.5, 0.75),
    z_bins: int = 5,
    threshold_factor: float = 3.0,
) -> MomentRestrictionReport:
    """Empirical check of the conditional quantile moment restriction.

    Within each instrument cell the fraction of outcomes below the true
    structural quantile must match tau up to sampling noise; the pass
    threshold is ``threshold_factor / sqrt(cell size)`` per cell.  Discrete
    instruments define cells by value, continuous ones by quantile bins.
    """
    data = sim.data
    y = data.y
    d = data.d[:, 0]
    z = data.z[:, 0]
    uniq = np.unique(z)
    if uniq.size <= 10:
        cells = [(f"z={v:g}", z == v) for v in uniq]
    else:
        edges = np.quantile(z, np.linspace(0.0, 1.0, z_bins + 1))
        edges[0], edges[-1] = -np.inf, np.inf
        cells = [
            (f"z-bin {i + 1}/{z_bins}", (z > edges[i]) & (z <= edges[i + 1]))
            for i in range(z_bins)
        ]
    sizes = np.array([int(np.sum(mask)) for _, mask in cells])
    if np.any(sizes == 0):
        empty = [lbl for (lbl, _), s in zip(cells, sizes) if s == 0]
        raise DataError(f"empty instrument cell(s): {empty}")

    tau_grid = np.asarray(tau_grid, dtype=float)
    deviations = np.empty((len(cells), tau_grid.size))
    for t, tau in enumerate(tau_grid):
        below = y <= sim.truth.structural_quantile(d, tau)
        for c, (_, mask) in enumerate(cells):
            deviations[c, t] = abs(float(np.mean(below[mask])) - tau)
    thresholds = threshold_factor / np.sqrt(sizes)
    passed = bool(np.all(deviations <= thresholds[:, None]))
    return MomentRestrictionReport(
        deviations=deviations,
        thresholds=thresholds,
        cell_sizes=sizes,
        cell_labels=tuple(lbl for lbl, _ in cells),
        tau_grid=tau_grid,
        passed=passed,
    )
