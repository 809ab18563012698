"""Backend selection for the interior-point kernel.

The compiled Cython kernel is preferred; the pure-numpy implementation is
the fallback.  Set ``IVQR_PURE_PYTHON=1`` to force the fallback (used by the
backend benchmark and the parity tests).
"""

import os

import numpy as np

from . import _ipm_python

if os.environ.get("IVQR_PURE_PYTHON"):
    _impl = _ipm_python
else:
    try:
        from . import _ipm_kernel as _impl
    except ImportError:  # extension not built; fall back silently
        _impl = _ipm_python


def backend_name() -> str:
    """Name of the active solver backend, ``"compiled"`` or ``"python"``."""
    return _impl.BACKEND


def available_backends() -> dict:
    """Importable backends keyed by name (for benchmarks and parity tests)."""
    out = {"python": _ipm_python}
    try:
        from . import _ipm_kernel

        out["compiled"] = _ipm_kernel
    except ImportError:
        pass
    return out


def solve_qr_program(X, y, tau, tol=1e-9, max_iter=200):
    """Solve the check-loss program; see the backend modules for details."""
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float).reshape(-1)
    return _impl.solve_qr_program(X, y, tau, tol, max_iter)
