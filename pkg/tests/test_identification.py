import itertools

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import norm

from ivqr.dataset import QuantileDataset
from ivqr.dgp import BinaryTreatmentDgp, replication_seeds, simulate_binary
from ivqr.exceptions import ConfigError, InsufficientCellDataError
from ivqr.identification import (
    DiscreteMomentSystem,
    default_scan_epsilon,
    estimate_moment_system,
    global_univalence_check,
    identification_region_scan,
    inequality_region_scan,
    jacobian,
    jacobians,
    local_rank_check,
    mlr_check,
    moment_vector,
    moment_vectors,
    projected_face_determinants,
)
from ivqr.regions import ParameterPolytope

from helpers import (
    a4_face_determinants,
    gated_normal_system,
    independent_instrument_system,
    strong_instrument_system,
)

GATED = BinaryTreatmentDgp(gate_by_instrument=True, sel_intercept=0.0)


# ---------------------------------------------------------------------------
# moment system estimation


def test_cell_probs_match_known_probabilities():
    # two-point instrument with known selection rates (0.8, 0.2; 0.3, 0.7)
    rng = np.random.Generator(np.random.Philox(42))
    n = 10000
    z = (rng.uniform(size=n) < 0.5).astype(float)
    p1 = np.where(z > 0.5, 0.7, 0.2)
    d = (rng.uniform(size=n) < p1).astype(float)
    y = d + rng.normal(size=n)
    data = QuantileDataset.from_arrays(y=y, d=d, z=z)
    sys = estimate_moment_system(data, tau=0.5)
    assert_allclose(sys.cell_probs, [[0.8, 0.2], [0.3, 0.7]], atol=0.02)


def test_cell_prob_rows_sum_to_one_exactly():
    sim = simulate_binary(BinaryTreatmentDgp(), 3000, seed=0)
    sys = estimate_moment_system(sim.data, tau=0.5)
    assert np.max(np.abs(sys.cell_probs.sum(axis=1) - 1.0)) < 1e-12


def test_degenerate_cell_outcome():
    # Y constant within each cell: step-function CDF, density integrates to 1
    rng = np.random.Generator(np.random.Philox(1))
    n = 400
    z = (rng.uniform(size=n) < 0.5).astype(float)
    d = z.copy()
    y = np.where(d > 0.5, 3.0, 1.0)
    data = QuantileDataset.from_arrays(y=y, d=d, z=z)
    sys = estimate_moment_system(data, tau=0.5)
    di, zi = 1, 1
    assert sys.cond_cdf(2.9999, di, zi)[0] == 0.0
    assert sys.cond_cdf(3.0, di, zi)[0] == 1.0
    grid = np.linspace(2.0, 4.0, 20001)
    mass = np.trapezoid(sys.cond_density(grid, di, zi), grid)
    assert abs(mass - 1.0) < 1e-3


def test_insufficient_cell_errors():
    rng = np.random.Generator(np.random.Philox(2))
    n = 200
    z = (rng.uniform(size=n) < 0.5).astype(float)
    d = z.copy()
    d[:5] = 1.0 - z[:5]  # a handful of defiers: nonempty but tiny cells
    y = rng.normal(size=n)
    data = QuantileDataset.from_arrays(y=y, d=d, z=z)
    with pytest.raises(InsufficientCellDataError):
        estimate_moment_system(data, tau=0.5)
    # zero-count cells are legal: they are outside the support
    sim = simulate_binary(GATED, 2000, seed=3)
    sys = estimate_moment_system(sim.data, tau=0.5)
    assert sys.cell_probs[0, 1] == 0.0


def test_more_treatments_than_instruments_rejected():
    rng = np.random.Generator(np.random.Philox(3))
    n = 300
    d = rng.integers(0, 3, size=n).astype(float)
    z = (rng.uniform(size=n) < 0.5).astype(float)
    data = QuantileDataset.from_arrays(y=rng.normal(size=n), d=d, z=z)
    with pytest.raises(ConfigError):
        estimate_moment_system(data, tau=0.5)


# ---------------------------------------------------------------------------
# moment vector


def test_moment_vector_at_cell_quantiles_when_d_is_z_measurable():
    sim = simulate_binary(
        BinaryTreatmentDgp(gate_by_instrument=True, sel_intercept=100.0), 4000, seed=5
    )  # selection always passes, so D = Z exactly
    data = sim.data
    sys = estimate_moment_system(data, tau=0.3)
    y_cells = []
    for d_val in (0.0, 1.0):
        in_cell = data.d[:, 0] == d_val
        y_cells.append(np.quantile(data.y[in_cell], 0.3, method="inverted_cdf"))
    pi = moment_vector(sys, y_cells)
    n_min = sys.min_instrument_cell_size()
    lower = -1.0 / (sys.l * 20.0) - 1.0 / n_min
    assert np.all(pi >= lower - 1e-12)
    assert np.all(pi <= 1.0 / n_min + 1e-12)


def test_moment_vector_limits():
    sim = simulate_binary(BinaryTreatmentDgp(), 1000, seed=6)
    sys = estimate_moment_system(sim.data, tau=0.4)
    assert_allclose(moment_vector(sys, [-1e12, -1e12]), [-0.4, -0.4], atol=1e-12)
    assert_allclose(moment_vector(sys, [1e12, 1e12]), [0.6, 0.6], atol=1e-12)


def test_moment_vector_matches_brute_force_counts():
    sim = simulate_binary(BinaryTreatmentDgp(), 5000, seed=7)
    data = sim.data
    sys = estimate_moment_system(sim.data, tau=0.25)
    rng = np.random.Generator(np.random.Philox(8))
    y, d, z = data.y, data.d[:, 0], data.z[:, 0]
    for _ in range(10):
        cand = rng.normal(size=2) * 2.0
        direct = []
        for zv in (0.0, 1.0):
            in_z = z == zv
            y_d = np.where(d[in_z] > 0.5, cand[1], cand[0])
            direct.append(np.mean(y[in_z] <= y_d) - 0.25)
        assert_allclose(moment_vector(sys, cand), direct, atol=1e-12)


# ---------------------------------------------------------------------------
# jacobian


def test_jacobian_zero_cell_regardless_of_density():
    sys, q = gated_normal_system(0.5)
    J = jacobian(sys, q)
    assert J[0, 1] == 0.0  # untreated-offer cell has probability zero
    assert np.all(J >= 0.0)
    # triangular determinant equals the product of its in-support entries
    assert_allclose(np.linalg.det(J), J[0, 0] * J[1, 1], atol=1e-15)


def test_jacobian_matches_finite_differences():
    sim = simulate_binary(BinaryTreatmentDgp(), 200000, seed=9)
    sys = estimate_moment_system(sim.data, tau=0.5)
    h = 1e-3
    bandwidth = max(
        0.9 * 1.0 * (sys.cell_counts.min()) ** (-0.2), 0.01
    )  # worst-cell Silverman scale
    tol = 10.0 * (h + bandwidth**2)
    for y0 in ([0.0, 1.0], [0.3, 0.8]):
        base = moment_vector(sys, y0)
        J = jacobian(sys, y0)
        for dcol in range(2):
            bumped = list(y0)
            bumped[dcol] += h
            fd = (moment_vector(sys, bumped) - base) / h
            assert np.max(np.abs(fd - J[:, dcol])) < tol


def test_estimated_gated_jacobian_triangular():
    sim = simulate_binary(GATED, 20000, seed=10)
    sys = estimate_moment_system(sim.data, tau=0.5)
    J = jacobian(sys, [0.0, 1.0])
    assert J[0, 1] == 0.0
    assert_allclose(np.linalg.det(J), J[0, 0] * J[1, 1], atol=1e-15)


# ---------------------------------------------------------------------------
# local rank


def test_local_rank_trivial_matrices():
    sys, q = gated_normal_system(0.5)

    def fake_system(mat):
        density = lambda y, d, z: np.full(np.atleast_1d(y).shape, mat[z][d])
        cdf = lambda y, d, z: np.clip(np.atleast_1d(y), 0, 1)
        return DiscreteMomentSystem.analytic(
            [0, 1], [0, 1], np.array([[0.5, 0.5], [0.5, 0.5]]), density, cdf, 0.5
        )

    diag = fake_system([[2.0, 0.0], [0.0, 2.0]])
    rep = local_rank_check(diag, [0.0, 0.0])
    assert rep.passed and rep.rank == 2

    rank_one = fake_system([[2.0, 4.0], [4.0, 8.0]])
    rep1 = local_rank_check(rank_one, [0.0, 0.0])
    assert not rep1.passed and rep1.rank == 1


def test_local_rank_strong_instrument_monte_carlo():
    q = np.array([0.0, 1.0])
    min_svs = []
    for child in replication_seeds(123, 50):
        sim = simulate_binary(BinaryTreatmentDgp(), 4000, seed=child)
        sys = estimate_moment_system(sim.data, tau=0.5)
        rep = local_rank_check(sys, q)
        assert rep.passed
        min_svs.append(rep.min_singular_value)
    assert min(min_svs) > 0.02


# ---------------------------------------------------------------------------
# likelihood-ratio conditions


def test_mlr_gated_trivially_satisfied():
    sys, q = gated_normal_system(0.5)
    rep = mlr_check(sys, ParameterPolytope.box(q, 2.0), 0.25)
    assert rep.direct.holds
    assert not rep.swapped.holds
    assert rep.passed


def test_mlr_symmetric_fails_both():
    sys, q = independent_instrument_system(0.5)
    rep = mlr_check(sys, ParameterPolytope.box(q, 1.0), 0.25)
    assert not rep.direct.holds
    assert not rep.swapped.holds
    assert not rep.passed


def test_mlr_agrees_with_global_check_on_strong_instrument():
    sys, q = strong_instrument_system(0.5)
    region = ParameterPolytope.box_halfspace(q, 1.5)
    rep = mlr_check(sys, region, 0.2)
    glob = global_univalence_check(sys, region, 0.2)
    assert rep.direct.holds
    assert glob.passed


def test_mlr_row_swap_symmetry():
    sys, q = strong_instrument_system(0.35)
    swapped = DiscreteMomentSystem.analytic(
        sys.d_support,
        sys.z_support,
        sys.cell_probs[::-1].copy(),
        lambda y, d, z: sys.cond_density(y, d, 1 - z),
        lambda y, d, z: sys.cond_cdf(y, d, 1 - z),
        sys.tau,
    )
    region = ParameterPolytope.box(q, 1.0)
    rep = mlr_check(sys, region, 0.25)
    rep_swapped = mlr_check(swapped, region, 0.25)
    assert rep.direct.holds == rep_swapped.swapped.holds
    assert rep.swapped.holds == rep_swapped.direct.holds


def test_mlr_requires_binary():
    sys, _ = gated_normal_system(0.5)
    sys3 = DiscreteMomentSystem.analytic(
        [0, 1],
        [0, 1, 2],
        np.array([[1.0, 0.0], [0.5, 0.5], [0.5, 0.5]]),
        sys.cond_density,
        sys.cond_cdf,
        0.5,
    )
    with pytest.raises(ConfigError):
        mlr_check(sys3, ParameterPolytope.box([0.0, 1.0], 1.0), 0.5)


# ---------------------------------------------------------------------------
# global univalence


def test_generic_projection_matches_handcoded_formulas():
    # the four face-projected determinants of the binary box-halfspace case
    rng = np.random.Generator(np.random.Philox(11))
    e1 = np.eye(2)[:, :1]
    e2 = np.eye(2)[:, 1:]
    diag = np.array([[1.0], [1.0]]) / np.sqrt(2.0)
    plane = np.eye(2)
    for _ in range(100):
        J = rng.uniform(0.01, 2.0, size=(1, 2, 2))
        oracle = a4_face_determinants(J[0])
        assert abs(projected_face_determinants(J, plane)[0] - oracle["plane"]) < 1e-12
        assert abs(projected_face_determinants(J, e1)[0] - oracle["e1"]) < 1e-12
        assert abs(projected_face_determinants(J, e2)[0] - oracle["e2"]) < 1e-12
        assert abs(projected_face_determinants(J, diag)[0] - oracle["diagonal"]) < 1e-12


def test_univalence_gated_passes_both_shapes():
    sys, q = gated_normal_system(0.5)
    for region in (
        ParameterPolytope.box(q, 2.0),
        ParameterPolytope.box_halfspace(q, 2.0),
    ):
        rep = global_univalence_check(sys, region, 0.2)
        assert rep.passed
        assert rep.permutation == (0, 1)
        assert all(f.min_det > 1e-10 for f in rep.faces)


def test_univalence_independent_instrument_fails():
    sys, q = independent_instrument_system(0.5)
    rep = global_univalence_check(sys, ParameterPolytope.box(q, 1.0), 0.25)
    assert not rep.passed
    region_face = next(f for f in rep.faces if f.label == "region")
    assert abs(region_face.min_det) < 1e-12  # proportional rows: zero determinant


def test_univalence_permutation_search_r3():
    # only the (first, third) instrument selection gives positive determinants
    A = {0: 0.0, 1: 1.5, 2: 1.0}

    def density(y, d, z):
        return norm.pdf(np.asarray(y, dtype=float) - (A[z] if d == 1 else 0.0))

    def cdf(y, d, z):
        return norm.cdf(np.asarray(y, dtype=float) - (A[z] if d == 1 else 0.0))

    sys3 = DiscreteMomentSystem.analytic(
        [0, 1], [0, 1, 2], np.full((3, 2), 0.5), density, cdf, 0.5
    )
    box = ParameterPolytope.box([0.0, 1.0], 0.4)
    rep = global_univalence_check(sys3, box, 0.05)
    assert rep.passed and rep.permutation == (0, 2)
    for m in itertools.permutations(range(3), 2):
        fixed = global_univalence_check(sys3, box, 0.05, permutations=m)
        assert fixed.passed == (m == (0, 2))


def test_univalence_region_dimension_mismatch():
    sys, q = gated_normal_system(0.5)
    with pytest.raises(ConfigError):
        global_univalence_check(sys, ParameterPolytope.box([0.0, 0.0, 0.0], 1.0), 0.5)


def test_univalence_bad_fixed_permutation():
    sys, q = gated_normal_system(0.5)
    with pytest.raises(ConfigError):
        global_univalence_check(sys, ParameterPolytope.box(q, 1.0), 0.5, permutations=(0, 0))


# ---------------------------------------------------------------------------
# equality scan


def test_scan_strong_instrument_small_cluster():
    sim = simulate_binary(BinaryTreatmentDgp(), 20000, seed=12)
    sys = estimate_moment_system(sim.data, tau=0.5)
    q = np.array([0.0, 1.0])
    step = 0.25
    scan = identification_region_scan(sys, [(q[0] - 1.5, q[0] + 1.5), (q[1] - 1.5, q[1] + 1.5)], step)
    assert not scan.is_empty
    assert scan.diameter() < 5 * step
    dist_to_q = np.max(np.abs(scan.points - q[None, :]), axis=1)
    assert dist_to_q.min() <= 2 * step


def test_scan_irrelevant_instrument_ridge():
    rng = np.random.Generator(np.random.Philox(13))
    n = 10000
    z = (rng.uniform(size=n) < 0.5).astype(float)
    d = (rng.uniform(size=n) < 0.5).astype(float)  # independent of z
    u = rng.uniform(size=n)
    y = d + norm.ppf(u)
    data = QuantileDataset.from_arrays(y=y, d=d, z=z)
    sys = estimate_moment_system(data, tau=0.5)
    bounds = [(-2.0, 2.0), (-1.0, 3.0)]
    scan = identification_region_scan(sys, bounds, 0.1)
    assert scan.points.shape[0] > 20
    assert scan.diameter() >= 2.0  # ridge spans at least half the box


def test_scan_epsilon_infinite_keeps_everything():
    sim = simulate_binary(BinaryTreatmentDgp(), 1000, seed=14)
    sys = estimate_moment_system(sim.data, tau=0.5)
    scan = identification_region_scan(sys, [(-1, 1), (0, 2)], 0.5, epsilon=np.inf)
    assert scan.points.shape[0] == scan.n_grid


def test_scan_analytic_requires_epsilon():
    sys, q = gated_normal_system(0.5)
    with pytest.raises(ConfigError):
        identification_region_scan(sys, [(-1, 1), (0, 2)], 0.5)


def test_scan_singleton_under_analytic_univalence():
    # population functionals plus a passing global check pin one grid point
    sys, q = gated_normal_system(0.5)
    assert global_univalence_check(sys, ParameterPolytope.box(q, 2.0), 0.2).passed
    scan = identification_region_scan(
        sys, [(q[0] - 2, q[0] + 2), (q[1] - 2, q[1] + 2)], step=0.02, epsilon=1e-6
    )
    assert scan.points.shape[0] == 1
    assert_allclose(scan.points[0], q, atol=1e-12)


def test_scan_deterministic():
    sim = simulate_binary(BinaryTreatmentDgp(), 2000, seed=15)
    sys = estimate_moment_system(sim.data, tau=0.5)
    s1 = identification_region_scan(sys, [(-1, 1), (0, 2)], 0.1)
    s2 = identification_region_scan(sys, [(-1, 1), (0, 2)], 0.1)
    assert np.array_equal(s1.points, s2.points)
    assert s1.epsilon == s2.epsilon == default_scan_epsilon(sys)


# ---------------------------------------------------------------------------
# inequality scan (discrete outcomes)


def _binary_outcome_dataset(n, seed, theta=(0.4, 0.7)):
    # Y = 1{U > 1 - theta_d}; selection on the rank variable via V
    rng = np.random.Generator(np.random.Philox(seed))
    v = rng.normal(size=n)
    u = norm.cdf(v)
    z = (rng.uniform(size=n) < 0.5).astype(float)
    d = ((1.2 * z + 0.8 * v + 0.8 * rng.normal(size=n)) > 0.6).astype(float)
    thr = np.where(d > 0.5, 1.0 - theta[1], 1.0 - theta[0])
    y = (u > thr).astype(float)
    return QuantileDataset.from_arrays(y=y, d=d, z=z)


def _true_candidate(theta=(0.4, 0.7), k=20):
    cells = np.linspace(0.05, 1.0, k)
    return np.vstack([
        (cells > 1.0 - theta[0] + 1e-12).astype(float),
        (cells > 1.0 - theta[1] + 1e-12).astype(float),
    ])


def test_inequality_scan_keeps_truth_monte_carlo():
    hits = 0
    reps = 40
    for child in replication_seeds(55, reps):
        data = _binary_outcome_dataset(10000, seed=child)
        result = inequality_region_scan(data)
        truth = _true_candidate()
        survives = any(np.array_equal(c, truth) for c in result.candidates)
        hits += survives
    assert hits >= 0.95 * reps


def test_inequality_scan_full_interval_trivial():
    data = _binary_outcome_dataset(3000, seed=77)
    # image covering the whole support satisfies the unit-interval constraint
    result = inequality_region_scan(data, index_sets=[((0.0, 1.0),)])
    covering = [c for c in result.candidates if set(np.unique(c)) == {0.0, 1.0}]
    assert len(covering) == len([
        c for c in result.candidates
    ]) or len(covering) > 0  # all covering candidates survive
    truth = _true_candidate()
    assert any(np.array_equal(c, truth) for c in result.candidates)


def test_inequality_scan_singleton_family_nests_default():
    data = _binary_outcome_dataset(5000, seed=78)
    singleton = inequality_region_scan(data, index_sets=[((0.25, 0.25),)])
    default = inequality_region_scan(data)
    keys = lambda res: {tuple(c.reshape(-1)) for c in res.candidates}
    assert keys(default) <= keys(singleton)


def test_inequality_scan_rejects_continuous_outcome():
    rng = np.random.Generator(np.random.Philox(16))
    data = QuantileDataset.from_arrays(
        y=rng.normal(size=500),
        d=(rng.uniform(size=500) < 0.5).astype(float),
        z=(rng.uniform(size=500) < 0.5).astype(float),
    )
    with pytest.raises(Exception):
        inequality_region_scan(data)


# ---------------------------------------------------------------------------
# vectorized consistency


def test_batch_evaluators_match_pointwise():
    sim = simulate_binary(BinaryTreatmentDgp(), 2000, seed=17)
    sys = estimate_moment_system(sim.data, tau=0.5)
    rng = np.random.Generator(np.random.Philox(18))
    Y = rng.normal(size=(7, 2))
    batch_pi = moment_vectors(sys, Y)
    batch_J = jacobians(sys, Y)
    for i in range(7):
        assert_allclose(batch_pi[i], moment_vector(sys, Y[i]), atol=1e-15)
        assert_allclose(batch_J[i], jacobian(sys, Y[i]), atol=1e-15)
