import numpy as np
import pytest

from sparsebath.baseline import TabulatedSpectralDensity, cosine_transform_sd, window
from sparsebath.bathmodel import DrudeLorentzModel, evaluate_sd
from sparsebath.timeseries import CorrelationSeries
from sparsebath.units import nyquist_wavenumber

from conftest import damped_cosines


def test_zero_correlation_gives_zero_density():
    sd = cosine_transform_sd(CorrelationSeries(np.zeros(50), 4.0), 300.0, [0.0, 100.0, 500.0])
    assert np.all(sd.values == 0.0)


def test_zero_frequency_is_zero(rng):
    corr = CorrelationSeries(np.abs(rng.normal(size=40)), 4.0)
    assert cosine_transform_sd(corr, 300.0, [0.0, 1.0]).values[0] == 0.0


def test_single_frequency_by_hand():
    # two lags: J = (beta w / 2) * 2 pi c * dt * (C0 + 2 C1 cos(w dt))
    from sparsebath.units import ANGULAR_PER_WAVENUMBER as A, thermal_beta

    corr = CorrelationSeries(np.array([2.0, 0.5]), 4.0)
    nu = 300.0
    expected = thermal_beta(300.0) * nu / 2 * A * 4.0 * (2.0 + 2 * 0.5 * np.cos(A * nu * 4.0))
    assert cosine_transform_sd(corr, 300.0, [nu]).values[0] == pytest.approx(expected, rel=1e-14)


def test_dense_sampling_matches_closed_form_at_peak():
    dt = 0.5
    t = np.arange(200000) * dt
    corr = CorrelationSeries(damped_cosines([(30.0, 200.0, 1.0)], t), dt)
    model = DrudeLorentzModel(((30.0, 200.0, 1.0),), 300.0)
    sd = cosine_transform_sd(corr, 300.0, [200.0])
    assert sd.values[0] == pytest.approx(evaluate_sd(model, 200.0), rel=1e-3)


def test_linearity(rng):
    a = CorrelationSeries(np.abs(rng.normal(size=30)) + 1, 4.0)
    b = CorrelationSeries(np.abs(rng.normal(size=30)) + 1, 4.0)
    grid = np.linspace(0, 1500, 31)
    combo = CorrelationSeries(2.5 * a.values + b.values, 4.0)
    lhs = cosine_transform_sd(combo, 200.0, grid).values
    rhs = 2.5 * cosine_transform_sd(a, 200.0, grid).values + cosine_transform_sd(b, 200.0, grid).values
    assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-10 * np.max(np.abs(rhs)))


def test_halving_dt_converges():
    # a Gaussian envelope keeps the even extension smooth, so the only error
    # left is quadrature error rather than aliasing of slow spectral tails
    def gaussian_cosines(t):
        from sparsebath.units import ANGULAR_PER_WAVENUMBER as A

        return np.exp(-((t / 300.0) ** 2)) * np.cos(200.0 * A * t) + 0.5 * np.exp(
            -((t / 150.0) ** 2)
        ) * np.cos(450.0 * A * t)

    grid = np.arange(0.0, nyquist_wavenumber(4.0), 10.0)
    coarse = cosine_transform_sd(CorrelationSeries(gaussian_cosines(np.arange(1000) * 4.0), 4.0), 300.0, grid)
    fine = cosine_transform_sd(CorrelationSeries(gaussian_cosines(np.arange(2000) * 2.0), 2.0), 300.0, grid)
    scale = np.max(np.abs(fine.values))
    assert np.max(np.abs(coarse.values - fine.values)) < 1e-4 * scale


def test_damped_cosine_matches_geometric_sum():
    # sum_k r^k cos(k theta) over K lags has a closed form
    from sparsebath.units import ANGULAR_PER_WAVENUMBER as A, thermal_beta

    dt, k = 4.0, 2500
    g, om = 30.0, 200.0
    corr = CorrelationSeries(damped_cosines([(g, om, 1.0)], np.arange(k) * dt), dt)
    nu = np.array([50.0, 200.0, 900.0, 3000.0])
    r = np.exp(-g * A * dt)
    total = np.zeros(nu.size)
    for sign in (+1, -1):
        z = r * np.exp(1j * (om + sign * nu) * A * dt)
        total += np.real((1 - z**k) / (1 - z))
    expected = thermal_beta(300.0) * nu / 2 * A * dt * (total - 1.0)
    got = cosine_transform_sd(corr, 300.0, nu).values
    assert np.allclose(got, expected, rtol=1e-10)


def test_nyquist_guard():
    corr = CorrelationSeries(np.ones(10), 4.0)
    with pytest.raises(ValueError, match="Nyquist"):
        cosine_transform_sd(corr, 300.0, [0.0, nyquist_wavenumber(4.0) * 1.01])


def test_rejects_bad_temperature():
    with pytest.raises(ValueError):
        cosine_transform_sd(CorrelationSeries(np.ones(10), 4.0), 0.0, [1.0])


def test_windows():
    corr = CorrelationSeries(np.ones(9), 4.0)
    assert np.array_equal(window(corr, "none").values, corr.values)
    hann = window(corr, "hann").values
    assert hann[0] == 1.0 and hann[-1] == pytest.approx(0.0, abs=1e-16)
    assert np.all(np.diff(hann) <= 0)
    assert np.array_equal(window(corr, ("exponential", np.inf)).values, corr.values)
    assert np.allclose(window(corr, "exponential:8").values, np.exp(-corr.times / 8))
    with pytest.raises(ValueError):
        window(corr, "kaiser")


def test_tabulated_density_validates_grid():
    with pytest.raises(ValueError):
        TabulatedSpectralDensity(np.array([0.0, 2.0, 1.0]), np.zeros(3), 300.0)
