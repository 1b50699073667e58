"""scikit-learn style wrappers around the recovery and baseline transforms.

Both estimators are fit on ``X`` = lag times (fs, one column, uniformly
spaced from zero) and ``y`` = correlation values (cm^-2).
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, column_or_1d

from .baseline import cosine_transform_sd, window
from .bathmodel import DrudeLorentzModel, evaluate_sd
from .dictionary import AtomGrid, Measurement
from .solver import SolverConfig, solve
from .synth import target_correlation
from .timeseries import CorrelationSeries


def _lag_series(X, y):
    X, y = check_X_y(X, y, ensure_min_samples=2, y_numeric=True)
    if X.shape[1] != 1:
        raise ValueError(f"X must hold a single column of lag times, got {X.shape[1]}")
    t = X[:, 0]
    dt = t[1] - t[0]
    if t[0] != 0 or not dt > 0 or not np.allclose(np.diff(t), dt, rtol=1e-9, atol=0):
        raise ValueError("lag times must be uniform and start at zero")
    return CorrelationSeries(y, dt)


class SparseBathRegressor(RegressorMixin, BaseEstimator):
    """Sparse Drude-Lorentz expansion of a correlation function.

    ``predict`` evaluates the recovered expansion at new lag times and
    ``spectral_density`` the matching closed-form J at wavenumbers.
    """

    def __init__(
        self,
        gamma_max=156.0,
        gamma_step=6.0,
        omega_max=2000.0,
        omega_step=2.0,
        mu=1.0,
        eta=1e-7,
        debias=True,
        debias_eta=1e-9,
        max_iters=20000,
        stall_iters=100,
        temperature=300.0,
        dense=False,
    ):
        self.gamma_max = gamma_max
        self.gamma_step = gamma_step
        self.omega_max = omega_max
        self.omega_step = omega_step
        self.mu = mu
        self.eta = eta
        self.debias = debias
        self.debias_eta = debias_eta
        self.max_iters = max_iters
        self.stall_iters = stall_iters
        self.temperature = temperature
        self.dense = dense

    def _grid(self):
        return AtomGrid(
            np.arange(0.0, self.gamma_max + 1e-9, self.gamma_step),
            np.arange(0.0, self.omega_max + 1e-9, self.omega_step),
        )

    def fit(self, X, y):
        corr = _lag_series(X, y)
        cfg = SolverConfig(
            mu=self.mu,
            eta=self.eta,
            debias=self.debias,
            debias_eta=self.debias_eta,
            max_iters=self.max_iters,
            stall_iters=self.stall_iters,
        )
        meas = Measurement.for_correlation(self._grid(), corr, dense=self.dense)
        self.spectrum_ = solve(corr, meas, cfg)
        self.atoms_ = self.spectrum_.atoms
        self.n_iter_ = self.spectrum_.iterations
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "spectrum_")
        t = column_or_1d(np.asarray(X, dtype=float).reshape(len(X), -1)[:, 0])
        return target_correlation(self.atoms_, t)

    def to_model(self):
        check_is_fitted(self, "spectrum_")
        return DrudeLorentzModel.from_spectrum(self.spectrum_, self.temperature)

    def spectral_density(self, omega):
        return evaluate_sd(self.to_model(), omega)


class CosineTransformEstimator(BaseEstimator):
    """Baseline spectral density from the direct cosine transform."""

    def __init__(self, temperature=300.0, window="none"):
        self.temperature = temperature
        self.window = window

    def fit(self, X, y):
        corr = _lag_series(X, y)
        self.correlation_ = window(corr, self.window)
        self.n_features_in_ = 1
        return self

    def predict(self, omega):
        """J in cm^-1 at the wavenumbers ``omega``."""
        check_is_fitted(self, "correlation_")
        omega = column_or_1d(np.asarray(omega, dtype=float).reshape(len(omega), -1)[:, 0])
        order = np.argsort(omega)
        sd = cosine_transform_sd(self.correlation_, self.temperature, omega[order])
        out = np.empty_like(omega)
        out[order] = sd.values
        return out
