"""Instrumental-variables quantile regression.

Point estimation by inverse quantile regression, weak-identification-robust
confidence regions by Wald-test inversion, identification diagnostics for
discrete treatments and instruments, and seeded Monte Carlo generators with
known ground truth.
"""

__version__ = "0.1.0"

from .chisq import chi_square_cdf, chi_square_quantile
from .dataset import QuantileDataset
from .dgp import (
    BinaryTreatmentDgp,
    DemandDgp,
    LocationScaleDgp,
    SimulatedDataset,
    TruthRecord,
    simulate_binary,
    simulate_demand,
    simulate_location_scale,
    validate_moment_restriction,
)
from .estimation import (
    ConfidenceRegion,
    IqrProfile,
    IvqrEstimate,
    LinearIvqrSpec,
    build_profile,
    default_grid,
    estimate,
    robust_confidence_region,
    variance_by_subsampling,
)
from .identification import (
    DiscreteMomentSystem,
    estimate_moment_system,
    global_univalence_check,
    identification_region_scan,
    inequality_region_scan,
    jacobian,
    local_rank_check,
    mlr_check,
    moment_vector,
)
from .qr import (
    QrFit,
    RegressionProblem,
    check_loss,
    fit_qr,
    hall_sheather_bandwidth,
    qr_covariance,
    residual_sign_counts,
)
from .regions import Face, ParameterPolytope
from .solver import backend_name

__all__ = [
    "__version__",
    "backend_name",
    "check_loss",
    "chi_square_cdf",
    "chi_square_quantile",
    "fit_qr",
    "hall_sheather_bandwidth",
    "qr_covariance",
    "residual_sign_counts",
    "build_profile",
    "default_grid",
    "estimate",
    "robust_confidence_region",
    "variance_by_subsampling",
    "estimate_moment_system",
    "moment_vector",
    "jacobian",
    "local_rank_check",
    "mlr_check",
    "global_univalence_check",
    "identification_region_scan",
    "inequality_region_scan",
    "simulate_location_scale",
    "simulate_demand",
    "simulate_binary",
    "validate_moment_restriction",
    "QuantileDataset",
    "RegressionProblem",
    "QrFit",
    "LinearIvqrSpec",
    "IqrProfile",
    "IvqrEstimate",
    "ConfidenceRegion",
    "DiscreteMomentSystem",
    "ParameterPolytope",
    "Face",
    "LocationScaleDgp",
    "DemandDgp",
    "BinaryTreatmentDgp",
    "SimulatedDataset",
    "TruthRecord",
]
