import math

import numpy as np
import pytest
from scipy import stats

from hdloc.distributions import (
    ar1_trace_r_squared,
    make_covariance,
    radial_moment,
    rng_for,
    sample_panel,
    zeta_moment,
)
from hdloc.exceptions import InvalidInputError, NonexistentMomentError
from hdloc.models import CovarianceSpec, MomentEstimates, RadialLaw, SignalSpec


def test_ar1_matrix():
    model = make_covariance(CovarianceSpec.ar1(0.5, 3))
    np.testing.assert_allclose(model.sigma, [[1.0, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 1.0]])
    np.testing.assert_allclose(model.factor @ model.factor.T, model.sigma, atol=1e-12)


def test_ar1_trace_closed_form():
    sigma = make_covariance(CovarianceSpec.ar1(0.5, 200)).sigma
    assert ar1_trace_r_squared(0.5, 200) == pytest.approx(float(np.sum(sigma ** 2)), rel=1e-9)


def test_identity_covariance():
    model = make_covariance(CovarianceSpec.identity(4))
    assert model.trace_r_squared == 4.0
    assert model.scales.tolist() == [1.0] * 4


def test_custom_covariance_uses_its_correlation():
    matrix = np.array([[4.0, 1.0], [1.0, 1.0]])
    model = make_covariance(CovarianceSpec.custom(matrix))
    assert model.trace_r_squared == pytest.approx(2.0 + 2.0 * 0.25, rel=1e-12)


def test_custom_covariance_validation():
    with pytest.raises(InvalidInputError):
        make_covariance(CovarianceSpec.custom(np.array([[1.0, 2.0], [2.0, 1.0]])))
    with pytest.raises(InvalidInputError):
        make_covariance(CovarianceSpec.custom(np.array([[1.0, 0.1], [0.2, 1.0]])))


def test_structured_covariance_is_read_only():
    model = make_covariance(CovarianceSpec.ar1(0.5, 5))
    with pytest.raises(ValueError):
        model.sigma[0, 0] = 2.0


def test_rng_streams():
    assert rng_for(3, 1).random() == rng_for(3, 1).random()
    assert rng_for(3, 1).random() != rng_for(3, 2).random()
    with pytest.raises(InvalidInputError):
        rng_for(-1)


def test_sample_panel_is_reproducible():
    first = sample_panel("ii", 10, 5, seed=4, stream=(7,))
    second = sample_panel("ii", 10, 5, seed=4, stream=(7,))
    other = sample_panel("ii", 10, 5, seed=4, stream=(8,))
    np.testing.assert_array_equal(first.values, second.values)
    assert not np.array_equal(first.values, other.values)


def test_signal_only_shifts_the_panel():
    null = sample_panel("i", 10, 5, seed=1)
    shifted = sample_panel("i", 10, 5, SignalSpec(delta=0.5, s=2), seed=1)
    np.testing.assert_allclose(shifted.values - null.values, np.tile([0.5, 0.5, 0.0, 0.0, 0.0], (10, 1)), atol=1e-12)


def test_null_panel_is_centred():
    means = sample_panel("i", 2000, 5, seed=0).values.mean(axis=0)
    assert np.all(np.abs(means) < 4.0 / math.sqrt(2000))


def test_mixture_setting_variance():
    values = sample_panel("iv", 100_000, 1, seed=0).values[:, 0]
    assert np.var(values) == pytest.approx(0.8 + 0.2 * 9.0, abs=0.1)


def test_t_setting_is_heavy_tailed():
    values = sample_panel("ii", 100_000, 1, seed=0).values[:, 0]
    assert stats.kurtosis(values, fisher=False) > 3.0


def test_unknown_setting():
    with pytest.raises(InvalidInputError):
        sample_panel("v", 10, 5)


def test_explicit_setting_dimension_must_match():
    with pytest.raises(InvalidInputError):
        sample_panel((RadialLaw.normal(), CovarianceSpec.identity(4)), 10, 5)


def test_closed_form_moments():
    assert radial_moment(RadialLaw.normal(), 3.0) == 1.0
    assert radial_moment(RadialLaw.t(3), 2.0) == pytest.approx(3.0, rel=1e-12)
    assert radial_moment(RadialLaw.t(3), -1.0) == pytest.approx(0.92132, abs=1e-5)
    assert radial_moment(RadialLaw.t(7), -2.0) == pytest.approx(1.0, rel=1e-12)
    mixture = RadialLaw.mixture(0.2, 10)
    assert radial_moment(mixture, 2.0) == pytest.approx(20.8, rel=1e-12)
    assert radial_moment(mixture, -2.0) == pytest.approx(0.802, rel=1e-12)


def test_t_moment_must_exist():
    with pytest.raises(NonexistentMomentError):
        radial_moment(RadialLaw.t(3), 3.0)


def test_monte_carlo_moment_agrees_with_closed_form():
    law = RadialLaw.t(5)
    estimate = radial_moment(law, -1.0, mode="mc", n_samples=200_000, seed=1)
    assert estimate == pytest.approx(radial_moment(law, -1.0), abs=0.01)


def test_moment_mode_validation():
    with pytest.raises(InvalidInputError):
        radial_moment(RadialLaw.normal(), 2.0, mode="quadrature")


def test_zeta_moment_reads_estimates_or_scales_the_radial_law():
    law = RadialLaw.normal()
    assert zeta_moment(law, -1.0, 200) == pytest.approx(200 ** -0.5 * radial_moment(law, -1.0), rel=1e-12)
    assert zeta_moment(law, 2.0, 50) == pytest.approx(50 * radial_moment(law, 2.0), rel=1e-12)
    assert zeta_moment(MomentEstimates({-1.0: 0.07, 0.0: 1.0}), -1.0, 200) == 0.07
