"""Reference spectral density: the prefactored cosine transform of C(t)."""

from dataclasses import dataclass

import numpy as np

from ._validation import check_1d_finite, check_increasing
from .timeseries import CorrelationSeries
from .units import (
    ANGULAR_PER_WAVENUMBER,
    nyquist_wavenumber,
    thermal_beta,
    wavenumber_to_angular,
)


@dataclass(frozen=True)
class TabulatedSpectralDensity:
    """J(omega) in cm^-1 sampled on an increasing wavenumber grid."""

    frequencies: np.ndarray
    values: np.ndarray
    temperature: float

    def __post_init__(self):
        freqs = check_increasing(self.frequencies, "frequencies")
        values = check_1d_finite(self.values, "values")
        if values.shape != freqs.shape:
            raise ValueError("frequencies and values differ in length")
        thermal_beta(self.temperature)
        object.__setattr__(self, "frequencies", freqs)
        object.__setattr__(self, "values", values)


def cosine_transform_sd(corr, temperature, freq_grid, chunk=512):
    """Harmonic-prefactor cosine transform of a sampled correlation function.

    Evaluates J(w) = (beta*hbar*w/2) * dt * [C_0 + 2 sum_{k>=1} C_k cos(w t_k)],
    the symmetric-extension quadrature of the two-sided transform, directly at
    each requested frequency.

    Parameters
    ----------
    corr : CorrelationSeries
        Correlation in cm^-2.
    temperature : float
        Kelvin.
    freq_grid : array_like
        Output frequencies in cm^-1; must not exceed the Nyquist limit of
        ``corr.dt``.

    Returns
    -------
    TabulatedSpectralDensity
        Values in cm^-1.
    """
    beta = thermal_beta(temperature)
    if corr.max_lag < 1:
        raise ValueError("empty correlation series")
    nu = check_increasing(freq_grid, "freq_grid")
    if nu[-1] > nyquist_wavenumber(corr.dt) * (1 + 1e-12):
        raise ValueError(
            f"requested frequency {nu[-1]} cm^-1 exceeds the Nyquist limit "
            f"{nyquist_wavenumber(corr.dt):.6g} cm^-1 for dt={corr.dt} fs"
        )
    weights = np.full(corr.max_lag, 2.0)
    weights[0] = 1.0
    wc = weights * corr.values
    t = corr.times
    omega = wavenumber_to_angular(nu)
    integral = np.empty(nu.size)
    for start in range(0, nu.size, chunk):
        block = omega[start : start + chunk]
        integral[start : start + chunk] = np.cos(np.outer(block, t)) @ wc
    integral *= corr.dt
    # cm^-2 fs -> cm^-1
    values = ANGULAR_PER_WAVENUMBER * 0.5 * beta * nu * integral
    return TabulatedSpectralDensity(nu, values, float(temperature))


def window(corr, kind="none"):
    """Taper a correlation series before transforming.

    ``kind`` is ``"none"``, ``"hann"`` (half Hann window, 1 at zero lag and 0
    at the last retained lag) or ``("exponential", tau_fs)``; the string
    form ``"exponential:tau_fs"`` is accepted too.
    """
    n = corr.max_lag
    if isinstance(kind, str) and kind.startswith("exponential:"):
        kind = ("exponential", float(kind.split(":", 1)[1]))
    if kind == "none":
        w = np.ones(n)
    elif kind == "hann":
        w = np.ones(n) if n == 1 else 0.5 * (1.0 + np.cos(np.pi * np.arange(n) / (n - 1)))
    elif isinstance(kind, tuple) and len(kind) == 2 and kind[0] == "exponential":
        tau = float(kind[1])
        if not tau > 0:
            raise ValueError("exponential window needs tau > 0")
        w = np.exp(-corr.times / tau)
    else:
        raise ValueError(f"unknown window kind {kind!r}")
    return CorrelationSeries(corr.values * w, corr.dt)
