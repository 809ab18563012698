"""Observation container with column roles.

A :class:`QuantileDataset` is a plain numeric matrix plus a role map saying
which columns are the outcome, the endogenous regressors, the exogenous
covariates, and the instruments.  All estimation and diagnostic routines
consume this container.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, DataError


def _as_index_tuple(cols) -> tuple[int, ...]:
    if cols is None:
        return ()
    if np.isscalar(cols):
        return (int(cols),)
    return tuple(int(c) for c in cols)


@dataclass(frozen=True)
class QuantileDataset:
    """Numeric observation matrix with named columns and role assignments.

    Parameters
    ----------
    matrix : ndarray of shape (n, m)
        Observations by columns, float64.
    column_names : sequence of str
        One name per column.
    y_col : int
        Index of the outcome column.
    d_cols, x_cols, z_cols : tuple of int
        Indices of endogenous regressors, exogenous covariates (an intercept
        is implicit and never stored), and instruments.  Must be disjoint.
    meta : dict
        Free-form provenance (source path, dropped-row count, ...).
    """

    matrix: np.ndarray
    column_names: tuple[str, ...]
    y_col: int
    d_cols: tuple[int, ...] = ()
    x_cols: tuple[int, ...] = ()
    z_cols: tuple[int, ...] = ()
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=float)
        if mat.ndim != 2:
            raise DataError(f"matrix must be 2-d, got shape {mat.shape}")
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "column_names", tuple(self.column_names))
        object.__setattr__(self, "d_cols", _as_index_tuple(self.d_cols))
        object.__setattr__(self, "x_cols", _as_index_tuple(self.x_cols))
        object.__setattr__(self, "z_cols", _as_index_tuple(self.z_cols))
        if len(self.column_names) != mat.shape[1]:
            raise DataError(
                f"{len(self.column_names)} column names for {mat.shape[1]} columns"
            )
        roles = [self.y_col, *self.d_cols, *self.x_cols, *self.z_cols]
        if len(set(roles)) != len(roles):
            raise ConfigError("column roles overlap")
        for c in roles:
            if not 0 <= c < mat.shape[1]:
                raise ConfigError(f"column index {c} out of range")
        if not np.all(np.isfinite(mat[:, roles])):
            raise DataError("role columns contain non-finite values")

    # -- accessors ---------------------------------------------------------

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def y(self) -> np.ndarray:
        return self.matrix[:, self.y_col]

    @property
    def d(self) -> np.ndarray:
        return self.matrix[:, list(self.d_cols)]

    @property
    def x(self) -> np.ndarray:
        return self.matrix[:, list(self.x_cols)]

    @property
    def z(self) -> np.ndarray:
        return self.matrix[:, list(self.z_cols)]

    def column(self, name: str) -> np.ndarray:
        try:
            return self.matrix[:, self.column_names.index(name)]
        except ValueError:
            raise DataError(f"no column named {name!r}") from None

    # -- support metadata --------------------------------------------------

    def d_support(self, col: int = 0) -> np.ndarray:
        """Sorted unique values of an endogenous column."""
        return np.unique(self.d[:, col])

    def z_support(self, col: int = 0) -> np.ndarray:
        """Sorted unique values of an instrument column."""
        return np.unique(self.z[:, col])

    def is_discrete(self, values: np.ndarray, max_levels: int = 10) -> bool:
        return np.unique(values).size <= max_levels

    def subset(self, rows) -> "QuantileDataset":
        """Row subset with identical roles (used by subsampling)."""
        return QuantileDataset(
            matrix=self.matrix[rows],
            column_names=self.column_names,
            y_col=self.y_col,
            d_cols=self.d_cols,
            x_cols=self.x_cols,
            z_cols=self.z_cols,
            meta=dict(self.meta),
        )

    @classmethod
    def from_arrays(cls, y, d=None, z=None, x=None, names=None, meta=None):
        """Assemble a dataset from separate arrays.

        Column order in the stored matrix is ``y, d..., x..., z...``.
        """
        y = np.asarray(y, dtype=float).reshape(-1)
        blocks = [y[:, None]]
        d_cols, x_cols, z_cols = (), (), ()

        def _block(a):
            a = np.asarray(a, dtype=float)
            return a[:, None] if a.ndim == 1 else a

        pos = 1
        if d is not None:
            b = _block(d)
            d_cols = tuple(range(pos, pos + b.shape[1]))
            pos += b.shape[1]
            blocks.append(b)
        if x is not None:
            b = _block(x)
            x_cols = tuple(range(pos, pos + b.shape[1]))
            pos += b.shape[1]
            blocks.append(b)
        if z is not None:
            b = _block(z)
            z_cols = tuple(range(pos, pos + b.shape[1]))
            pos += b.shape[1]
            blocks.append(b)
        matrix = np.hstack(blocks)
        if names is None:
            names = ["y"]
            names += [f"d{i}" for i in range(len(d_cols))]
            names += [f"x{i}" for i in range(len(x_cols))]
            names += [f"z{i}" for i in range(len(z_cols))]
        return cls(
            matrix=matrix,
            column_names=tuple(names),
            y_col=0,
            d_cols=d_cols,
            x_cols=x_cols,
            z_cols=z_cols,
            meta=meta or {},
        )
