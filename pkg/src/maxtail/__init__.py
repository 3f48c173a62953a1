"""Tail dependence of max-stable time series: exact coefficients, simulation and estimator checks."""

from .coefficients import (
    AsymptoticVariances,
    CoefficientTable,
    Diverges,
    TruncatedSum,
    cesaro_scaled_sum,
    chi_cross,
    chi_direct,
    chi_joint,
    coefficient_table,
    kappa,
    lrd_variance_limit,
    sigma0_sq,
    sigma_matrix,
    sigmaT_sq,
    theta,
)
from .estimators import (
    Centering,
    EstimateTriple,
    ThresholdSchedule,
    estimate,
    standardized_statistics,
    threshold_schedule,
)
from .models import (
    Armax,
    FrechetAlpha,
    Independent,
    LagSet,
    MaxMovingMaxima,
    PowerLawMaxMovingMaxima,
    exceedance_prob,
    fdd_cdf,
    indicator_cov,
    make_model,
)
from .simulate import SamplePath, simulate_path, simulate_poisson_series

__version__ = "0.1.0"
