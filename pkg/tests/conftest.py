import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(20240901))


def make_problem(rng, n, p, tau=None, scale=1.0):
    """Random full-rank regression problem with an intercept column."""
    from ivqr.qr import RegressionProblem

    cols = [np.ones(n)] + [rng.normal(size=n) for _ in range(p - 1)]
    X = np.column_stack(cols)
    y = X @ rng.normal(size=p) + scale * rng.normal(size=n)
    if tau is None:
        tau = float(rng.uniform(0.1, 0.9))
    return RegressionProblem(design=X, response=y, tau=tau)
