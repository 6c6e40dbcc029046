# Weighted spatial-sign tests for the high-dimensional one-sample location problem
from ._version import __version__
from .are import are_table, are_weighted_pair, finite_p_are
from .combine import cauchy_combine, cc_test, joint_independence_diagnostic, mean_cc_test
from .distributions import make_covariance, radial_moment, sample_panel
from .exceptions import (
    DegenerateSampleError,
    DegenerateSeriesError,
    DegenerateVarianceError,
    HDLocError,
    InvalidConfigError,
    InvalidInputError,
    MissingMomentError,
    NonexistentMomentError,
    NumericalFailureError,
    UnsupportedDimensionError,
)
from .max_test import gumbel_cdf, gumbel_quantile, max_test, mean_max_test, t_max_statistic, theoretical_power_max
from .models import (
    CombinedResult,
    CovarianceSpec,
    HREstimate,
    RadialLaw,
    Sample,
    ScaleMode,
    SignalSpec,
    SolverOptions,
    TestResult,
    WeightExponent,
)
from .sign_core import hr_residuals, leave_out_scale, moment_estimates, spatial_sign, weighted_hr_estimate
from .sum_test import mean_sum_test, sigma_hat_sq, sum_test, t_sum_statistic, theoretical_power_sum

__all__ = [
    "__version__",
    "CombinedResult",
    "CovarianceSpec",
    "DegenerateSampleError",
    "DegenerateSeriesError",
    "DegenerateVarianceError",
    "HDLocError",
    "HREstimate",
    "InvalidConfigError",
    "InvalidInputError",
    "MissingMomentError",
    "NonexistentMomentError",
    "NumericalFailureError",
    "RadialLaw",
    "Sample",
    "ScaleMode",
    "SignalSpec",
    "SolverOptions",
    "TestResult",
    "UnsupportedDimensionError",
    "WeightExponent",
    "are_table",
    "are_weighted_pair",
    "cauchy_combine",
    "cc_test",
    "finite_p_are",
    "gumbel_cdf",
    "gumbel_quantile",
    "hr_residuals",
    "joint_independence_diagnostic",
    "leave_out_scale",
    "make_covariance",
    "max_test",
    "mean_cc_test",
    "mean_max_test",
    "mean_sum_test",
    "moment_estimates",
    "radial_moment",
    "sample_panel",
    "sigma_hat_sq",
    "spatial_sign",
    "sum_test",
    "t_max_statistic",
    "t_sum_statistic",
    "theoretical_power_max",
    "theoretical_power_sum",
    "weighted_hr_estimate",
]
