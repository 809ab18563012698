"""Identification diagnostics for discrete treatments and instruments.

Everything here works off a :class:`DiscreteMomentSystem`: estimated cell
probabilities P[D=d|Z=z] together with conditional outcome densities and
CDFs per cell.  A system can be estimated from data (empirical frequencies,
Gaussian-kernel densities, empirical CDFs) or constructed analytically from
exact model functionals, so population-level properties are testable without
estimation noise.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from .dataset import QuantileDataset
from .exceptions import ConfigError, DataError, InsufficientCellDataError
from .regions import ParameterPolytope

DEFAULT_DET_TOL = 1e-10
DEFAULT_RANK_RTOL = 1e-8
MAX_SEARCH_INSTRUMENTS = 6


# ---------------------------------------------------------------------------
# moment system


@dataclass(frozen=True)
class DiscreteMomentSystem:
    """Estimated or analytic cell probabilities and conditional laws.

    ``cond_density(y, d_index, z_index)`` and ``cond_cdf(y, d_index, z_index)``
    take support *indices*, accept scalar or array ``y``, and must be
    vectorized over ``y``.  ``cell_counts``/``n`` are None in analytic mode.
    """

    d_support: np.ndarray
    z_support: np.ndarray
    cell_probs: np.ndarray  # (r, l), rows indexed by z
    cond_density: object
    cond_cdf: object
    tau: float
    cell_counts: np.ndarray | None = None
    n: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        d_sup = np.asarray(self.d_support, dtype=float)
        z_sup = np.asarray(self.z_support, dtype=float)
        probs = np.asarray(self.cell_probs, dtype=float)
        object.__setattr__(self, "d_support", d_sup)
        object.__setattr__(self, "z_support", z_sup)
        object.__setattr__(self, "cell_probs", probs)
        if d_sup.size > z_sup.size:
            raise ConfigError(
                f"{d_sup.size} treatment values but only {z_sup.size} instrument values"
            )
        if probs.shape != (z_sup.size, d_sup.size):
            raise ConfigError(
                f"cell_probs must have shape (r, l) = {(z_sup.size, d_sup.size)}, "
                f"got {probs.shape}"
            )
        if np.any(probs < -1e-12):
            raise ConfigError("cell probabilities must be nonnegative")
        if np.max(np.abs(probs.sum(axis=1) - 1.0)) > 1e-9:
            raise ConfigError("cell probability rows must sum to 1")
        if not 0.0 < self.tau < 1.0:
            raise ConfigError(f"tau must be in (0, 1), got {self.tau}")

    @property
    def l(self) -> int:
        return self.d_support.size

    @property
    def r(self) -> int:
        return self.z_support.size

    @property
    def is_analytic(self) -> bool:
        return self.n is None

    def min_instrument_cell_size(self) -> int:
        if self.cell_counts is None:
            raise ConfigError("analytic systems carry no cell counts")
        return int(self.cell_counts.sum(axis=1).min())

    @classmethod
    def analytic(cls, d_support, z_support, cell_probs, density, cdf, tau):
        """Build a system from exact model functionals.

        ``density(y, d_index, z_index)`` and ``cdf(y, d_index, z_index)``
        must be vectorized over ``y``.
        """
        return cls(
            d_support=np.asarray(d_support, dtype=float),
            z_support=np.asarray(z_support, dtype=float),
            cell_probs=np.asarray(cell_probs, dtype=float),
            cond_density=density,
            cond_cdf=cdf,
            tau=tau,
        )


def _silverman_bandwidth(sample: np.ndarray) -> float:
    m = sample.size
    sd = float(np.std(sample, ddof=1)) if m > 1 else 0.0
    q75, q25 = np.quantile(sample, [0.75, 0.25])
    iqr_scale = float(q75 - q25) / 1.34
    spread = min([c for c in (sd, iqr_scale) if c > 0.0], default=0.0)
    if spread <= 0.0:
        # degenerate cell: pick a narrow but integrable kernel width
        center = float(np.mean(sample))
        return max(1e-2 * (1.0 + abs(center)), 1e-6)
    return 0.9 * spread * m ** (-0.2)


def _kde_pdf(y, sample: np.ndarray, h: float, chunk: int = 256) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.empty(y.shape[0])
    for i in range(0, y.shape[0], chunk):
        block = y[i : i + chunk]
        out[i : i + chunk] = norm.pdf(
            (block[:, None] - sample[None, :]) / h
        ).mean(axis=1) / h
    return out


def estimate_moment_system(
    data: QuantileDataset,
    tau: float,
    bandwidth="silverman",
    min_cell_count: int = 20,
) -> DiscreteMomentSystem:
    """Plug-in moment system from a dataset with discrete D and Z.

    Cell probabilities are empirical frequencies; conditional densities are
    Gaussian kernel estimates with Silverman bandwidths on the within-cell
    outcomes; conditional CDFs are within-cell empirical CDFs.  A (d, z)
    cell with zero observations is treated as outside the support; a cell
    with fewer than ``min_cell_count`` observations (but more than zero) is
    an error, as is an instrument value with no observations.
    """
    if data.d.shape[1] != 1 or data.z.shape[1] != 1:
        raise ConfigError("moment systems need exactly one D and one Z column")
    y = data.y
    d = data.d[:, 0]
    z = data.z[:, 0]
    d_support = np.unique(d)
    z_support = np.unique(z)
    l, r = d_support.size, z_support.size
    if l > r:
        raise ConfigError(f"{l} treatment values but only {r} instrument values")

    counts = np.zeros((r, l), dtype=int)
    cells = {}
    for zi, zv in enumerate(z_support):
        in_z = z == zv
        nz = int(np.sum(in_z))
        if nz == 0:
            raise InsufficientCellDataError(
                f"no observations with Z={zv}", cell=(None, zv)
            )
        for di, dv in enumerate(d_support):
            sample = np.sort(y[in_z & (d == dv)])
            counts[zi, di] = sample.size
            if 0 < sample.size < min_cell_count:
                raise InsufficientCellDataError(
                    f"cell (D={dv}, Z={zv}) has only {sample.size} observations "
                    f"(floor {min_cell_count})",
                    cell=(dv, zv),
                )
            if sample.size:
                h = (
                    _silverman_bandwidth(sample)
                    if bandwidth == "silverman"
                    else float(bandwidth)
                )
                cells[(di, zi)] = (sample, h)

    cell_probs = counts / counts.sum(axis=1, keepdims=True)

    def cond_density(yy, di, zi):
        entry = cells.get((di, zi))
        yy = np.atleast_1d(np.asarray(yy, dtype=float))
        if entry is None:
            return np.zeros(yy.shape[0])
        sample, h = entry
        return _kde_pdf(yy, sample, h)

    def cond_cdf(yy, di, zi):
        entry = cells.get((di, zi))
        yy = np.atleast_1d(np.asarray(yy, dtype=float))
        if entry is None:
            return np.zeros(yy.shape[0])
        sample, _ = entry
        return np.searchsorted(sample, yy, side="right") / sample.size

    return DiscreteMomentSystem(
        d_support=d_support,
        z_support=z_support,
        cell_probs=cell_probs,
        cond_density=cond_density,
        cond_cdf=cond_cdf,
        tau=tau,
        cell_counts=counts,
        n=data.n,
    )


# ---------------------------------------------------------------------------
# moment vector and Jacobian


def moment_vector(sys: DiscreteMomentSystem, y) -> np.ndarray:
    """Instrument-wise moments: entry z is sum_d P[Y<=y_d|d,z] P[d|z] - tau."""
    return moment_vectors(sys, np.atleast_2d(np.asarray(y, dtype=float)))[0]


def moment_vectors(sys: DiscreteMomentSystem, Y: np.ndarray) -> np.ndarray:
    """Vectorized moment evaluation for candidate rows ``Y`` of shape (m, l)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[1] != sys.l:
        raise ValueError(f"candidates must have {sys.l} columns, got {Y.shape[1]}")
    out = np.full((Y.shape[0], sys.r), -sys.tau)
    for zi in range(sys.r):
        for di in range(sys.l):
            p = sys.cell_probs[zi, di]
            if p > 0.0:
                out[:, zi] += p * np.asarray(sys.cond_cdf(Y[:, di], di, zi))
    return out


def jacobian(sys: DiscreteMomentSystem, y) -> np.ndarray:
    """r x l matrix with (z, d) entry f(y_d | d, z) P[d | z]; entries >= 0."""
    return jacobians(sys, np.atleast_2d(np.asarray(y, dtype=float)))[0]


def jacobians(sys: DiscreteMomentSystem, Y: np.ndarray) -> np.ndarray:
    """Stacked Jacobians for candidate rows ``Y``: shape (m, r, l)."""
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    out = np.zeros((Y.shape[0], sys.r, sys.l))
    for zi in range(sys.r):
        for di in range(sys.l):
            p = sys.cell_probs[zi, di]
            if p > 0.0:
                out[:, zi, di] = p * np.asarray(sys.cond_density(Y[:, di], di, zi))
    return out


# ---------------------------------------------------------------------------
# local and global checks


@dataclass(frozen=True)
class LocalRankReport:
    rank: int
    min_singular_value: float
    passed: bool
    singular_values: np.ndarray
    y: np.ndarray


def local_rank_check(
    sys: DiscreteMomentSystem, y, rtol: float = DEFAULT_RANK_RTOL
) -> LocalRankReport:
    """Numerical rank of the Jacobian at ``y``; passes iff it equals l."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    J = jacobian(sys, y)
    sv = np.linalg.svd(J, compute_uv=False)
    rank = int(np.sum(sv > rtol * sv[0])) if sv[0] > 0.0 else 0
    return LocalRankReport(
        rank=rank,
        min_singular_value=float(sv[sys.l - 1]),
        passed=rank == sys.l,
        singular_values=sv,
        y=y,
    )


@dataclass(frozen=True)
class MlrConditionReport:
    holds: bool
    worst_point: np.ndarray
    worst_margin: float
    n_points: int


@dataclass(frozen=True)
class MlrReport:
    direct: MlrConditionReport
    swapped: MlrConditionReport

    @property
    def passed(self) -> bool:
        return self.direct.holds or self.swapped.holds


def mlr_check(
    sys: DiscreteMomentSystem, region: ParameterPolytope, grid_step: float
) -> MlrReport:
    """Monotone-likelihood-ratio sufficient conditions over a region.

    Binary case only.  The "direct" pair asks the joint densities to satisfy
    g11 g00 > g10 g01 strictly with g11 > 0 and g00 > 0 at every grid point
    (g_dz is the Jacobian entry for treatment d, instrument z); the
    "swapped" pair is the row-reordered alternative g11 g00 < g10 g01 with
    g10 > 0 and g01 > 0.  Cross-multiplied form, so a vanishing denominator
    counts as trivially satisfied.  "Neither holds" is a legitimate report.
    """
    if sys.l != 2 or sys.r != 2:
        raise ConfigError("the likelihood-ratio check applies to the binary case")
    if region.dim != 2:
        raise ConfigError("region dimension must be 2")
    pts = region.faces()[0].grid_points(grid_step)
    J = jacobians(sys, pts)
    g00, g10 = J[:, 0, 0], J[:, 0, 1]
    g01, g11 = J[:, 1, 0], J[:, 1, 1]
    lr = g11 * g00 - g10 * g01

    def condition(ratio_margin, pos_a, pos_b):
        margin = np.minimum(ratio_margin, np.minimum(pos_a, pos_b))
        worst = int(np.argmin(margin))
        return MlrConditionReport(
            holds=bool(np.all(ratio_margin > 0.0) and np.all(pos_a > 0.0) and np.all(pos_b > 0.0)),
            worst_point=pts[worst].copy(),
            worst_margin=float(margin[worst]),
            n_points=pts.shape[0],
        )

    return MlrReport(
        direct=condition(lr, g11, g00),
        swapped=condition(-lr, g10, g01),
    )


@dataclass(frozen=True)
class FaceCheck:
    label: str
    dim: int
    min_det: float
    worst_point: np.ndarray
    n_points: int


@dataclass(frozen=True)
class UnivalenceReport:
    passed: bool
    permutation: tuple[int, ...] | None
    permutation_z_values: tuple[float, ...] | None
    faces: list
    searched: int
    tolerance: float
    grid_step: float


def projected_face_determinants(J_m: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """Determinants of proj_L o J restricted to the face subspace L.

    ``J_m`` is a stack (m, l, l) of row-selected Jacobians and ``basis`` an
    orthonormal (l, k) basis of L; the map is expressed in that basis, so the
    determinant is det(B' J_m B).
    """
    M = np.einsum("kl,nlm,mj->nkj", basis.T, J_m, basis)
    return np.linalg.det(M)


def _face_checks_for_permutation(sys, faces_pts, m) -> tuple[bool, list]:
    rows = list(m)
    checks = []
    ok = True
    for face, pts, J in faces_pts:
        dets = projected_face_determinants(J[:, rows, :], face.basis)
        worst = int(np.argmin(dets))
        checks.append(
            FaceCheck(
                label=face.label,
                dim=face.dim,
                min_det=float(dets[worst]),
                worst_point=pts[worst].copy(),
                n_points=pts.shape[0],
            )
        )
        if dets[worst] <= DEFAULT_DET_TOL:
            ok = False
    return ok, checks


def global_univalence_check(
    sys: DiscreteMomentSystem,
    region: ParameterPolytope,
    grid_step: float,
    permutations="search",
) -> UnivalenceReport:
    """Face-projected positive-determinant condition over a region.

    For every face F of the region with spanning subspace L, the map
    proj_L o J_m restricted to L must have a strictly positive determinant at
    every grid point of F, for some selection m of l instrument rows (an
    l-permutation).  ``permutations="search"`` tries all of them in
    lexicographic order with early exit; beyond r=6 instruments a fixed
    permutation must be supplied.
    """
    if region.dim != sys.l:
        raise ConfigError(
            f"region dimension {region.dim} does not match l = {sys.l}"
        )
    if region.kind == "box_halfspace" and sys.l != 2:
        raise ConfigError("box_halfspace regions apply to the binary case")

    if permutations == "search":
        if sys.r > MAX_SEARCH_INSTRUMENTS:
            raise ConfigError(
                f"permutation search is infeasible for r = {sys.r} > "
                f"{MAX_SEARCH_INSTRUMENTS}; pass a fixed permutation"
            )
        candidates = list(itertools.permutations(range(sys.r), sys.l))
    else:
        m = tuple(int(i) for i in permutations)
        if len(m) != sys.l or len(set(m)) != sys.l or not all(0 <= i < sys.r for i in m):
            raise ConfigError(
                f"permutation must hold {sys.l} distinct instrument indices in "
                f"[0, {sys.r}), got {m}"
            )
        candidates = [m]

    faces_pts = []
    for face in region.faces():
        pts = face.grid_points(grid_step)
        faces_pts.append((face, pts, jacobians(sys, pts)))

    best = None  # (min over faces of min_det, permutation, checks)
    for m in candidates:
        ok, checks = _face_checks_for_permutation(sys, faces_pts, m)
        if ok:
            return UnivalenceReport(
                passed=True,
                permutation=tuple(m),
                permutation_z_values=tuple(float(sys.z_support[i]) for i in m),
                faces=checks,
                searched=candidates.index(m) + 1,
                tolerance=DEFAULT_DET_TOL,
                grid_step=grid_step,
            )
        score = min(c.min_det for c in checks)
        if best is None or score > best[0]:
            best = (score, m, checks)
    _, m, checks = best
    return UnivalenceReport(
        passed=False,
        permutation=tuple(m),
        permutation_z_values=tuple(float(sys.z_support[i]) for i in m),
        faces=checks,
        searched=len(candidates),
        tolerance=DEFAULT_DET_TOL,
        grid_step=grid_step,
    )


# ---------------------------------------------------------------------------
# region scans


@dataclass(frozen=True)
class RegionScanResult:
    points: np.ndarray  # (m, l) surviving candidates
    epsilon: float
    bounds: tuple
    step: float
    n_grid: int
    best_point: np.ndarray  # grid argmin of the moment deviation
    best_deviation: float

    @property
    def is_empty(self) -> bool:
        return self.points.shape[0] == 0

    def diameter(self) -> float:
        """Largest coordinate range covered by the surviving points."""
        if self.is_empty:
            return 0.0
        return float(np.max(self.points.max(axis=0) - self.points.min(axis=0)))


def default_scan_epsilon(sys: DiscreteMomentSystem) -> float:
    """Sampling-noise tolerance 2 sqrt(log(r n) / n_min)."""
    if sys.n is None:
        raise ConfigError(
            "analytic systems have no sample size; pass epsilon explicitly"
        )
    n_min = sys.min_instrument_cell_size()
    return 2.0 * float(np.sqrt(np.log(sys.r * sys.n) / n_min))


def _axis_grid(lo: float, hi: float, step: float) -> np.ndarray:
    npts = int(round((hi - lo) / step)) + 1
    return np.linspace(lo, hi, max(npts, 2))


def identification_region_scan(
    sys: DiscreteMomentSystem,
    bounds,
    step: float,
    epsilon: float | None = None,
    chunk: int = 65536,
) -> RegionScanResult:
    """All grid candidates whose moment vector is within ``epsilon`` of zero.

    ``bounds`` is a per-dimension list of (lo, hi).  The default epsilon is
    calibrated to sampling noise; an empty result flags misspecification and
    is returned, not raised.
    """
    bounds = [(float(lo), float(hi)) for lo, hi in np.atleast_2d(bounds)]
    if len(bounds) != sys.l:
        raise ConfigError(f"need {sys.l} bound pairs, got {len(bounds)}")
    if epsilon is None:
        epsilon = default_scan_epsilon(sys)
    axes = [_axis_grid(lo, hi, step) for lo, hi in bounds]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.reshape(-1) for m in mesh])
    keep = []
    best_idx, best_dev = 0, np.inf
    for i in range(0, pts.shape[0], chunk):
        block = pts[i : i + chunk]
        dev = np.max(np.abs(moment_vectors(sys, block)), axis=1)
        keep.append(block[dev <= epsilon])
        j = int(np.argmin(dev))
        if dev[j] < best_dev:
            best_idx, best_dev = i + j, float(dev[j])
    points = np.vstack(keep) if keep else np.empty((0, sys.l))
    return RegionScanResult(
        points=points,
        epsilon=float(epsilon),
        bounds=tuple(bounds),
        step=float(step),
        n_grid=pts.shape[0],
        best_point=pts[best_idx].copy(),
        best_deviation=best_dev,
    )


# ---------------------------------------------------------------------------
# inequality scan for discrete outcomes


@dataclass(frozen=True)
class InequalityScanResult:
    candidates: np.ndarray  # (m, l, K) outcome values per tau-grid cell
    tau_grid: np.ndarray  # right endpoints of the K cells
    slack: float
    n_candidates: int
    n_index_sets: int

    @property
    def is_empty(self) -> bool:
        return self.candidates.shape[0] == 0


def _default_interval_family(tau_step: float):
    """Closed intervals with grid endpoints, plus disjoint pairs of them."""
    K = int(round(1.0 / tau_step))
    pts = np.linspace(0.0, 1.0, K + 1)
    singles = [((pts[i], pts[j]),) for i in range(K + 1) for j in range(i + 1, K + 1)]
    pairs = [
        ((pts[a], pts[b]), (pts[c], pts[d]))
        for a, b, c, d in itertools.combinations(range(K + 1), 4)
    ]
    return singles + pairs


def _enumerate_step_candidates(n_arms: int, K: int, n_values: int, cap: int):
    per_arm = list(
        itertools.combinations_with_replacement(range(n_values), K)
    )  # nondecreasing index paths
    total = len(per_arm) ** n_arms
    if total > cap:
        raise ConfigError(
            f"{total} candidate step functions exceed the cap {cap}; "
            "pass explicit candidates"
        )
    combos = itertools.product(per_arm, repeat=n_arms)
    return np.array([c for c in combos], dtype=int)  # (m, l, K)


def inequality_region_scan(
    data: QuantileDataset,
    tau_step: float = 0.05,
    index_sets="default",
    slack: float | None = None,
    candidates=None,
    max_candidates: int = 200000,
    max_outcome_levels: int = 8,
) -> InequalityScanResult:
    """Moment-inequality scan for discrete outcomes.

    Candidate structural functions are nondecreasing step functions on a
    uniform tau grid with values in the observed outcome support.  A
    candidate survives if, for every closed set I in the family and every
    instrument value z,

        Leb(I) <= P_hat[Y in m(D, I) | Z = z] + slack.

    The default family holds all closed intervals with endpoints on the tau
    grid and all disjoint unions of two of them.
    """
    if data.d.shape[1] != 1 or data.z.shape[1] != 1:
        raise ConfigError("the scan needs exactly one D and one Z column")
    y, d, z = data.y, data.d[:, 0], data.z[:, 0]
    y_support = np.unique(y)
    if y_support.size > max_outcome_levels:
        raise DataError(
            f"outcome takes {y_support.size} values; the inequality scan "
            f"handles at most {max_outcome_levels}"
        )
    d_support, z_support = np.unique(d), np.unique(z)
    l, r, s = d_support.size, z_support.size, y_support.size
    n = y.shape[0]

    K = int(round(1.0 / tau_step))
    if abs(K * tau_step - 1.0) > 1e-9:
        raise ConfigError(f"tau_step must divide 1 exactly, got {tau_step}")
    cell_hi = np.linspace(tau_step, 1.0, K)

    # joint pmf T[z, d, v] = P_hat[Y=v, D=d | Z=z]
    T = np.zeros((r, l, s))
    z_counts = np.zeros(r)
    for zi, zv in enumerate(z_support):
        in_z = z == zv
        nz = int(np.sum(in_z))
        if nz == 0:
            raise InsufficientCellDataError(f"no observations with Z={zv}")
        z_counts[zi] = nz
        for di, dv in enumerate(d_support):
            sel = in_z & (d == dv)
            for vi, vv in enumerate(y_support):
                T[zi, di, vi] = np.sum(sel & (y == vv)) / nz

    if slack is None:
        slack = 2.0 * float(np.sqrt(np.log(r * n) / z_counts.min()))

    if candidates is None:
        cand_idx = _enumerate_step_candidates(l, K, s, max_candidates)
    else:
        cand_vals = np.asarray(candidates, dtype=float)
        if cand_vals.ndim == 2:
            cand_vals = cand_vals[None, ...]
        if cand_vals.shape[1:] != (l, K):
            raise ConfigError(
                f"candidates must have shape (m, {l}, {K}), got {cand_vals.shape}"
            )
        if np.any(np.diff(cand_vals, axis=2) < 0):
            raise ConfigError("candidate step functions must be nondecreasing")
        cand_idx = np.searchsorted(y_support, cand_vals)
        if not np.allclose(y_support[cand_idx], cand_vals):
            raise ConfigError("candidate values must lie in the outcome support")

    family = _default_interval_family(tau_step) if index_sets == "default" else list(index_sets)

    # one-hot of candidate values: (m, l, K, s)
    m_c = cand_idx.shape[0]
    onehot = np.zeros((m_c, l, K, s), dtype=bool)
    mi, li, ki = np.indices(cand_idx.shape)
    onehot[mi, li, ki, cand_idx] = True

    alive = np.ones(m_c, dtype=bool)
    for intervals in family:
        leb = sum(b - a for a, b in intervals)
        mask = np.zeros(K, dtype=bool)
        for a, b in intervals:
            # tau-cell k covers ((k-1)h, kh]; it meets [a, b] iff b > (k-1)h
            # and a <= kh
            mask |= (b > cell_hi - tau_step) & (a <= cell_hi)
        if not mask.any():
            if leb > slack:
                alive[:] = False
                break
            continue
        image = onehot[alive][:, :, mask, :].any(axis=2)  # (m_alive, l, s)
        prob = np.einsum("zdv,mdv->mz", T, image)
        ok = np.all(prob + slack >= leb, axis=1)
        idx_alive = np.flatnonzero(alive)
        alive[idx_alive[~ok]] = False
        if not alive.any():
            break

    return InequalityScanResult(
        candidates=y_support[cand_idx[alive]],
        tau_grid=cell_hi,
        slack=float(slack),
        n_candidates=m_c,
        n_index_sets=len(family),
    )
