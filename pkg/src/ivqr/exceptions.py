"""Exception hierarchy.

Config, data, and numerical failures map to distinct CLI exit codes, so the
split below is part of the command-line contract, not just taste.
"""


class IvqrError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(IvqrError):
    """Invalid configuration: bad column roles, grid spec, levels, flags."""


class DataError(IvqrError):
    """Problems with input data files or datasets."""


class CellParseError(DataError):
    def __init__(self, row, column, value):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(
            f"unparseable numeric value {value!r} at row {row}, column {column!r}"
        )


class EmptyDataError(DataError):
    """No usable rows after dropping incomplete ones."""


class NumericalError(IvqrError):
    """Base class for numerical failures in estimation."""


class SingularDesignError(NumericalError):
    """Design matrix does not have full column rank."""


class ConvergenceError(NumericalError):
    """Solver hit its iteration cap before reaching the gap tolerance."""

    def __init__(self, iterations, gap, tol):
        self.iterations = iterations
        self.gap = gap
        self.tol = tol
        super().__init__(
            f"no convergence after {iterations} iterations "
            f"(duality gap {gap:.3e}, tolerance {tol:.1e})"
        )


class NearSingularCovarianceError(NumericalError):
    """Density-weighted Gram matrix is numerically singular.

    Usually signals a weak design or a bandwidth too small for the sample.
    """


class EstimationFailedError(NumericalError):
    """No valid grid point available to minimize over."""


class UnreliableVarianceError(NumericalError):
    """Too many subsample estimations failed to trust the variance."""


class InsufficientCellDataError(DataError):
    def __init__(self, message, cell=None):
        self.cell = cell
        super().__init__(message)


class EquilibriumError(NumericalError):
    """No bracket found for the market-clearing price of an observation."""


class InvalidDgpError(ConfigError):
    """Generator parameters violate a required model property."""


class RegionShapeError(ConfigError):
    """Unsupported parameter-region shape for an identification check."""
