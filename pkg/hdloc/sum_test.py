"""Weighted sum-type U-statistic, its variance estimator and the mean-based SUM baseline.

For a pair (i, j) let V_k = D^-1/2 X_k, U_k = U(V_k) and w_k = ||V_k||^m, where D
is either the leave-two-out fit on rows other than i and j (exact mode) or the
full-sample fit shared by every pair (shared-scale mode). Then

    T_SUM   = 2 / (n (n - 1)) sum_{i<j} w_i w_j U_i^T U_j
    sigma^2 = 2 n^-4 sum_{i != j} w_i^2 w_j^2 {(U_i - mu_ij)^T U_j} {(U_j - mu_ij)^T U_i}

with mu_ij = (n - 2)^-1 sum_{k != i, j} w_k U_k, evaluated in the same frame.
Both scale fits use the sign weights (m = 0).

The mean-based baseline is the scalar-invariant statistic

    (n xbar^T D_s^-1 xbar - (n - 1) p / (n - 3)) / sqrt(2 (tr R^2 - p^2 / (n - 1)) c)

with D_s the diagonal of the sample covariance, R the sample correlation matrix
and c = 1 + tr R^2 / p^(3/2).
"""

# stdlib imports
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Union

# third party imports
import numpy as np
from scipy import stats

# local imports
from .distributions import zeta_moment
from .exceptions import DegenerateSampleError, DegenerateVarianceError, InvalidInputError, NumericalFailureError
from .models import (
    MomentEstimates,
    RadialLaw,
    Sample,
    ScaleMode,
    SolverOptions,
    SumVarianceEstimate,
    TestResult,
    WeightExponent,
    as_sample,
    check_alpha,
)
from .sign_core import leave_out_scale, row_signs, weighted_hr_estimate

logger = logging.getLogger(__name__)


@dataclass
class SumComponents:
    """Raw statistic and variance estimate computed in one pass over the pairs."""

    statistic: float
    sigma_sq: float
    pair_count: int
    scale_mode: ScaleMode
    warnings: List[str] = field(default_factory=list)

    @property
    def studentized(self) -> float:
        return self.statistic / math.sqrt(self.sigma_sq)


def _frame(values: np.ndarray, d: np.ndarray, m: WeightExponent):
    radii, signs = row_signs(values / np.sqrt(d))
    if m.m < 0 and np.any(radii == 0):
        raise DegenerateSampleError(f"zero observation with m={m.m:g}: the weight w(0) is undefined")
    return m.weights(radii), signs


def _pair_terms(weights: np.ndarray, signs: np.ndarray, i: int, j: int):
    n = len(weights)
    weighted = weights[:, None] * signs
    keep = np.ones(n, dtype=bool)
    keep[[i, j]] = False
    centre = weighted[keep].sum(axis=0) / (n - 2)
    cross = float(signs[i] @ signs[j])
    a_ij = cross - float(centre @ signs[j])
    a_ji = cross - float(centre @ signs[i])
    statistic_term = weights[i] * weights[j] * cross
    variance_term = weights[i] ** 2 * weights[j] ** 2 * a_ij * a_ji
    return statistic_term, variance_term


def _exact_components(sample: Sample, m: WeightExponent, opts: Optional[SolverOptions]) -> SumComponents:
    n = sample.n
    if n < 6:
        raise InvalidInputError(f"exact leave-two-out mode needs n >= 6, got n={n}")
    values = sample.values
    statistic_terms = []
    variance_terms = []
    stalled = 0
    for i in range(n - 1):
        for j in range(i + 1, n):
            est = leave_out_scale(sample, (i, j), WeightExponent.SIGN, opts)
            if not est.converged:
                stalled += 1
            weights, signs = _frame(values, est.d_hat, m)
            t_term, v_term = _pair_terms(weights, signs, i, j)
            statistic_terms.append(t_term)
            variance_terms.append(v_term)
    warnings = []
    if stalled:
        warnings.append(f"{stalled} of {len(statistic_terms)} leave-two-out scale fits did not converge")
    # fsum is correctly rounded, so the result does not depend on pair order
    statistic = 2.0 * math.fsum(statistic_terms) / (n * (n - 1))
    sigma_sq = 2.0 * 2.0 * math.fsum(variance_terms) / n ** 4
    return SumComponents(statistic, sigma_sq, n * (n - 1), ScaleMode.EXACT, warnings)


def _shared_components(sample: Sample, m: WeightExponent, opts: Optional[SolverOptions],
                       d: Optional[np.ndarray]) -> SumComponents:
    n = sample.n
    warnings = []
    if d is None:
        est = weighted_hr_estimate(sample, WeightExponent.SIGN, opts)
        if not est.converged:
            warnings.append(f"shared scale fit did not converge: {est.note}")
        d = est.d_hat
    else:
        d = np.asarray(d, dtype=float)
        if d.shape != (sample.p,) or np.any(d <= 0):
            raise InvalidInputError(f"fixed scale must be {sample.p} positive entries")
    if n < 2:
        raise InvalidInputError("the sum statistic needs at least two observations")
    weights, signs = _frame(sample.values, d, m)
    weighted = weights[:, None] * signs

    gram = weighted @ weighted.T
    statistic = float((gram.sum() - np.trace(gram)) / (n * (n - 1)))

    if n < 3:
        sigma_sq = float("nan")
    else:
        cross = signs @ signs.T
        mixed = weighted @ signs.T
        total = signs @ weighted.sum(axis=0)
        # A[i, j] = (U_i - mu_ij)^T U_j with mu_ij the mean weighted sign without rows i and j
        centred = cross - (total[None, :] - mixed - np.diag(mixed)[None, :]) / (n - 2)
        squared = weights ** 2
        terms = np.outer(squared, squared) * centred * centred.T
        np.fill_diagonal(terms, 0.0)
        sigma_sq = float(2.0 * terms.sum() / n ** 4)
    return SumComponents(statistic, sigma_sq, n * (n - 1), ScaleMode.SHARED, warnings)


def sum_components(X: Union[Sample, np.ndarray], m: Union[WeightExponent, float] = WeightExponent.INVERSE_NORM,
                   scale_mode: Union[ScaleMode, str] = ScaleMode.EXACT, opts: Optional[SolverOptions] = None,
                   d: Optional[np.ndarray] = None) -> SumComponents:
    """Compute T_SUM and sigma^2 together; ``d`` fixes the shared scale instead of fitting it."""
    sample = as_sample(X)
    m = WeightExponent.coerce(m)
    scale_mode = ScaleMode.coerce(scale_mode)
    if scale_mode is ScaleMode.EXACT:
        if d is not None:
            raise InvalidInputError("a fixed scale is only meaningful in shared-scale mode")
        components = _exact_components(sample, m, opts)
    else:
        components = _shared_components(sample, m, opts, d)
    if not math.isfinite(components.statistic):
        raise NumericalFailureError("sum statistic is not finite")
    return components


def t_sum_statistic(X: Union[Sample, np.ndarray], m: Union[WeightExponent, float] = WeightExponent.INVERSE_NORM,
                    scale_mode: Union[ScaleMode, str] = ScaleMode.EXACT, opts: Optional[SolverOptions] = None,
                    d: Optional[np.ndarray] = None) -> float:
    """The raw, unstandardized U-statistic."""
    return sum_components(X, m, scale_mode, opts, d).statistic


def _checked_variance(components: SumComponents) -> SumVarianceEstimate:
    sigma_sq = components.sigma_sq
    if not math.isfinite(sigma_sq) or sigma_sq <= 0:
        raise DegenerateVarianceError(
            f"sum-test variance estimate is {sigma_sq:.6g} (statistic {components.statistic:.6g}, "
            f"{components.pair_count} ordered pairs, {components.scale_mode.value})"
        )
    return SumVarianceEstimate(sigma_sq, components.pair_count)


def sigma_hat_sq(X: Union[Sample, np.ndarray], m: Union[WeightExponent, float] = WeightExponent.INVERSE_NORM,
                 scale_mode: Union[ScaleMode, str] = ScaleMode.EXACT, opts: Optional[SolverOptions] = None,
                 d: Optional[np.ndarray] = None) -> SumVarianceEstimate:
    return _checked_variance(sum_components(X, m, scale_mode, opts, d))


def sum_result(components: SumComponents, m: WeightExponent, alpha: float) -> TestResult:
    """Normal calibration of precomputed components."""
    _checked_variance(components)
    z = components.studentized
    return TestResult.from_p_value(
        f"{m.label}-SUM",
        z,
        float(stats.norm.sf(z)),
        alpha,
        warnings=components.warnings,
        scale_mode=components.scale_mode.value,
    )


def sum_test(X: Union[Sample, np.ndarray], m: Union[WeightExponent, float] = WeightExponent.INVERSE_NORM,
             alpha: float = 0.05, scale_mode: Union[ScaleMode, str] = ScaleMode.EXACT,
             opts: Optional[SolverOptions] = None) -> TestResult:
    """
    Weighted sum-type test.

    Rejects when T_SUM / sigma_hat exceeds z_alpha. The result's statistic is
    the studentized value; p_value = 1 - Phi(T_SUM / sigma_hat).
    """
    m = WeightExponent.coerce(m)
    alpha = check_alpha(alpha)
    return sum_result(sum_components(X, m, scale_mode, opts), m, alpha)


def theoretical_power_sum(theta, D, R_trace_sq: float, n: int, p: int,
                          m: Union[WeightExponent, float], moments: Union[MomentEstimates, RadialLaw],
                          alpha: float = 0.05) -> float:
    """
    Asymptotic power Phi(-z_a + zeta_{m-1}^2 p n theta^T D^-1 theta / (zeta_{2m} sqrt(2 tr R^2))).

    ``D`` holds the diagonal of the scale matrix (squared scales).
    """
    alpha = check_alpha(alpha)
    m = WeightExponent.coerce(m)
    theta = np.asarray(theta, dtype=float)
    D = np.asarray(D, dtype=float)
    if theta.shape != (p,) or D.shape != (p,):
        raise InvalidInputError(f"theta and D must have length p={p}")
    if np.any(D <= 0):
        raise InvalidInputError("scales in D must be positive")
    if R_trace_sq < p:
        raise InvalidInputError(f"tr(R^2) must be at least p={p}, got {R_trace_sq}")
    if moments is None:
        raise InvalidInputError("theoretical_power_sum needs moment estimates or a radial law")
    zeta_lower = zeta_moment(moments, m.m - 1.0, p)
    zeta_double = zeta_moment(moments, 2.0 * m.m, p)
    signal = float(theta @ (theta / D))
    shift = zeta_lower ** 2 * p * n * signal / (zeta_double * math.sqrt(2.0 * R_trace_sq))
    return float(stats.norm.cdf(-stats.norm.isf(alpha) + shift))


def mean_sum_test(X: Union[Sample, np.ndarray], alpha: float = 0.05) -> TestResult:
    """Scalar-invariant mean-based SUM baseline with normal calibration."""
    sample = as_sample(X)
    sample.require_shape()
    alpha = check_alpha(alpha)
    values = sample.values
    n, p = values.shape
    variances = values.var(axis=0, ddof=1)
    if np.any(variances <= 0):
        raise DegenerateSampleError(f"zero sample variance in columns {np.flatnonzero(variances <= 0).tolist()}")
    means = values.mean(axis=0)
    standardized = (values - means) / np.sqrt(variances)
    inner = standardized @ standardized.T
    trace_r_squared = float(np.sum(inner ** 2)) / (n - 1) ** 2
    spread = trace_r_squared - p ** 2 / (n - 1)
    correction = 1.0 + trace_r_squared / p ** 1.5
    if spread <= 0:
        raise DegenerateVarianceError(
            f"SUM variance term tr(R^2) - p^2/(n-1) = {spread:.6g} is not positive (n={n}, p={p})"
        )
    statistic = (n * float(means @ (means / variances)) - (n - 1) * p / (n - 3)) / math.sqrt(
        2.0 * spread * correction
    )
    return TestResult.from_p_value("SUM", statistic, float(stats.norm.sf(statistic)), alpha)
