import math

import numpy as np
import pytest
from scipy import stats

from hdloc.distributions import sample_panel
from hdloc.exceptions import DegenerateSampleError, DegenerateVarianceError, InvalidInputError
from hdloc.models import RadialLaw, ScaleMode, WeightExponent
from hdloc.sign_core import leave_out_scale
from hdloc.sum_test import (
    SumComponents,
    mean_sum_test,
    sigma_hat_sq,
    sum_components,
    sum_result,
    sum_test,
    t_sum_statistic,
    theoretical_power_sum,
)


def signs_and_weights(values, d, m):
    scaled = values / np.sqrt(d)
    radii = np.linalg.norm(scaled, axis=1)
    return scaled / radii[:, None], radii ** m


def brute_force(values, m, d=None):
    """Loop over pairs exactly as the definitions read."""
    n = values.shape[0]
    statistic_terms = []
    variance_terms = []
    for i in range(n - 1):
        for j in range(i + 1, n):
            scale = leave_out_scale(values, (i, j)).d_hat if d is None else d
            U, w = signs_and_weights(values, scale, m)
            others = [k for k in range(n) if k not in (i, j)]
            centre = sum(w[k] * U[k] for k in others) / (n - 2)
            a_ij = (U[i] - centre) @ U[j]
            a_ji = (U[j] - centre) @ U[i]
            statistic_terms.append(w[i] * w[j] * (U[i] @ U[j]))
            variance_terms.append(w[i] ** 2 * w[j] ** 2 * a_ij * a_ji)
    statistic = 2.0 * math.fsum(statistic_terms) / (n * (n - 1))
    sigma_sq = 4.0 * math.fsum(variance_terms) / n ** 4
    return statistic, sigma_sq


def test_two_observations_with_fixed_scale():
    values = np.array([[1.0, 2.0, 2.0], [3.0, 0.0, 4.0]])
    for m in (-1.0, 0.0, 0.5):
        expected = 3.0 ** m * 5.0 ** m * (3.0 + 8.0) / 15.0
        statistic = t_sum_statistic(values, m, ScaleMode.SHARED, d=np.ones(3))
        assert statistic == pytest.approx(expected, rel=1e-12)


def test_sign_weights_reduce_to_plain_sign_statistic():
    values = sample_panel("i", 9, 6, seed=7).values
    d = np.linspace(0.5, 2.0, 6)
    U, _ = signs_and_weights(values, d, 0.0)
    expected = 2.0 * sum(U[i] @ U[j] for i in range(9) for j in range(i + 1, 9)) / (9 * 8)
    assert t_sum_statistic(values, 0.0, ScaleMode.SHARED, d=d) == pytest.approx(expected, rel=1e-12)


@pytest.mark.parametrize("m", [-1.0, 0.0, 1.0])
def test_shared_scale_matches_pair_loop(m):
    values = sample_panel("ii", 10, 5, seed=2).values
    d = np.array([1.0, 0.5, 2.0, 1.5, 0.8])
    components = sum_components(values, m, ScaleMode.SHARED, d=d)
    statistic, sigma_sq = brute_force(values, m, d)
    assert components.statistic == pytest.approx(statistic, rel=1e-10)
    assert components.sigma_sq == pytest.approx(sigma_sq, rel=1e-9)
    assert components.pair_count == 90


@pytest.mark.parametrize("m, seed", [(-1.0, 4), (0.0, 5), (1.0, 6)])
def test_exact_mode_matches_pair_loop(m, seed):
    values = sample_panel("iv", 8, 4, seed=seed).values
    components = sum_components(values, m, ScaleMode.EXACT)
    statistic, sigma_sq = brute_force(values, m)
    assert components.statistic == pytest.approx(statistic, rel=1e-10)
    assert components.sigma_sq == pytest.approx(sigma_sq, rel=1e-9)
    assert components.scale_mode is ScaleMode.EXACT


def test_exact_mode_is_deterministic():
    values = sample_panel("ii", 8, 4, seed=1).values
    first = sum_components(values, -1.0, ScaleMode.EXACT)
    second = sum_components(values, -1.0, ScaleMode.EXACT)
    assert first.statistic == second.statistic
    assert first.sigma_sq == second.sigma_sq


def test_statistic_is_symmetric_in_the_rows():
    sample = sample_panel("i", 12, 6, seed=3)
    order = np.random.default_rng(0).permutation(12)
    for mode in (ScaleMode.SHARED, ScaleMode.EXACT):
        base = sum_components(sample, -1.0, mode)
        permuted = sum_components(sample.values[order], -1.0, mode)
        assert permuted.statistic == pytest.approx(base.statistic, rel=1e-5)
        assert permuted.sigma_sq == pytest.approx(base.sigma_sq, rel=1e-5)


def test_studentized_statistic_is_scale_invariant():
    values = sample_panel("i", 8, 4, seed=9).values
    factors = np.array([0.1, 1.0, 5.0, 30.0])
    base = sum_components(values, -1.0, ScaleMode.EXACT)
    scaled = sum_components(values * factors, -1.0, ScaleMode.EXACT)
    assert scaled.studentized == pytest.approx(base.studentized, rel=1e-5)


def test_exact_mode_needs_six_rows():
    values = sample_panel("i", 5, 4, seed=0).values
    with pytest.raises(InvalidInputError, match="n >= 6"):
        sum_test(values, -1.0)


def test_fixed_scale_only_in_shared_mode():
    values = sample_panel("i", 8, 4, seed=0).values
    with pytest.raises(InvalidInputError):
        sum_components(values, -1.0, ScaleMode.EXACT, d=np.ones(4))


def test_zero_row_with_negative_m_is_degenerate():
    values = sample_panel("i", 8, 4, seed=0).values.copy()
    values[3] = 0.0
    with pytest.raises(DegenerateSampleError):
        sum_components(values, -1.0, ScaleMode.SHARED, d=np.ones(4))
    sum_components(values, 0.0, ScaleMode.SHARED, d=np.ones(4))


def test_zero_statistic_has_p_value_one_half():
    result = sum_result(SumComponents(0.0, 1.0, 2, ScaleMode.SHARED), WeightExponent.SIGN, 0.05)
    assert result.method == "SS-SUM"
    assert result.p_value == 0.5
    assert result.reject is False
    assert result.scale_mode == "shared-scale"


def test_non_positive_variance_is_degenerate():
    with pytest.raises(DegenerateVarianceError):
        sum_result(SumComponents(1.0, -0.5, 90, ScaleMode.SHARED), WeightExponent.INVERSE_NORM, 0.05)
    with pytest.raises(DegenerateVarianceError):
        sum_result(SumComponents(1.0, float("nan"), 2, ScaleMode.SHARED), WeightExponent.INVERSE_NORM, 0.05)


def test_sum_test_reports_studentized_statistic():
    sample = sample_panel("iii", 20, 30, seed=4)
    components = sum_components(sample, -1.0, ScaleMode.SHARED)
    result = sum_test(sample, -1.0, 0.05, ScaleMode.SHARED)
    assert result.method == "IN-SUM"
    assert result.statistic == pytest.approx(components.statistic / math.sqrt(components.sigma_sq), rel=1e-12)
    assert result.p_value == pytest.approx(stats.norm.sf(result.statistic), rel=1e-12)
    assert sigma_hat_sq(sample, -1.0, ScaleMode.SHARED).sigma_sq_hat == pytest.approx(components.sigma_sq)


def test_dense_signal_is_rejected():
    values = sample_panel("ii", 30, 50, seed=8).values + 0.5
    assert sum_test(values, -1.0, 0.05, ScaleMode.SHARED).reject
    assert mean_sum_test(values).reject


def test_theoretical_power_sum_at_null_is_alpha():
    power = theoretical_power_sum(np.zeros(50), np.ones(50), 60.0, 80, 50, -1.0, RadialLaw.t(4))
    assert power == pytest.approx(0.05, rel=1e-12)


def test_theoretical_power_sum_grows_with_n():
    theta = np.full(50, 0.05)
    powers = [theoretical_power_sum(theta, np.ones(50), 60.0, n, 50, -1.0, RadialLaw.t(4)) for n in (20, 40, 80)]
    assert powers == sorted(powers)
    assert powers[0] > 0.05


def test_theoretical_power_sum_normal_law_ignores_m():
    theta = np.full(50, 0.05)
    inverse = theoretical_power_sum(theta, np.ones(50), 60.0, 40, 50, -1.0, RadialLaw.normal())
    sign = theoretical_power_sum(theta, np.ones(50), 60.0, 40, 50, 0.0, RadialLaw.normal())
    assert inverse == pytest.approx(sign, rel=1e-12)


def test_theoretical_power_sum_validation():
    with pytest.raises(InvalidInputError):
        theoretical_power_sum(np.zeros(5), np.ones(5), 4.0, 40, 5, -1.0, RadialLaw.normal())
    with pytest.raises(InvalidInputError):
        theoretical_power_sum(np.zeros(5), np.ones(4), 6.0, 40, 5, -1.0, RadialLaw.normal())


def test_mean_sum_baseline():
    sample = sample_panel("i", 20, 10, seed=0)
    result = mean_sum_test(sample)
    assert result.method == "SUM"
    assert result.reject == (result.p_value < 0.05)
    values = sample.values.copy()
    values[:, 4] = 2.0
    with pytest.raises(DegenerateSampleError):
        mean_sum_test(values)


@pytest.mark.slow
def test_studentized_sum_is_standardized_under_null():
    z = [
        sum_components(sample_panel("ii", 80, 200, seed=0, stream=(r,)), -1.0, ScaleMode.SHARED).studentized
        for r in range(500)
    ]
    assert 0.7 <= np.var(z) <= 1.4


@pytest.mark.slow
def test_sum_statistic_is_centred_under_null():
    values = [
        t_sum_statistic(sample_panel("i", 40, 50, seed=0, stream=(r,)), -1.0, ScaleMode.SHARED)
        for r in range(500)
    ]
    assert abs(np.mean(values)) <= 3 * np.std(values, ddof=1) / math.sqrt(500)
