"""Damped-cosine measurement operator over a (gamma, omega) atom grid."""

from dataclasses import dataclass, field

import numpy as np

from ._validation import DimensionError, check_1d_finite, check_increasing
from .units import wavenumber_to_angular


@dataclass(frozen=True)
class AtomGrid:
    """Damping rates and frequencies of the dictionary atoms, both in cm^-1."""

    gammas: np.ndarray
    omegas: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "gammas", check_increasing(self.gammas, "gammas"))
        object.__setattr__(self, "omegas", check_increasing(self.omegas, "omegas"))

    @property
    def shape(self):
        return (self.gammas.size, self.omegas.size)

    @property
    def n_atoms(self):
        return self.gammas.size * self.omegas.size

    def index_of(self, gamma, omega):
        """Grid index of the atom nearest to ``(gamma, omega)``."""
        return (
            int(np.argmin(np.abs(self.gammas - gamma))),
            int(np.argmin(np.abs(self.omegas - omega))),
        )


def default_grid():
    """Omega = 0, 2, ..., 2000 cm^-1 and gamma = 0, 6, ..., 156 cm^-1."""
    return AtomGrid(np.arange(0.0, 160.0 + 1e-9, 6.0), np.arange(0.0, 2000.0 + 1e-9, 2.0))


@dataclass
class Measurement:
    """The damped-cosine operator sampled at ``times`` (fs).

    Column (i, j) is ``scale[i, j] * exp(-gamma_i t) * cos(omega_j t)``.
    The cosine table (n_times x n_omegas) is cached; the full operator is
    materialised only when ``dense=True``.
    """

    grid: AtomGrid
    times: np.ndarray
    normalize: bool = True
    dense: bool = False
    scale: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.times = check_1d_finite(self.times, "times")
        g = wavenumber_to_angular(self.grid.gammas)
        w = wavenumber_to_angular(self.grid.omegas)
        self._decay = np.exp(-np.outer(self.times, g))  # (K, n_gamma)
        self._cos = np.cos(np.outer(self.times, w))  # (K, n_omega)
        if self.normalize:
            norm2 = (self._decay**2).T @ (self._cos**2)
            with np.errstate(divide="ignore"):
                scale = np.where(norm2 > 0, 1.0 / np.sqrt(norm2), 0.0)
        else:
            scale = np.ones(self.grid.shape)
        self.scale = scale
        self._col_norms = None
        self._matrix = None
        if self.dense:
            self._matrix = (
                self._decay[:, :, None] * self._cos[:, None, :] * self.scale[None]
            ).reshape(self.times.size, -1)

    @classmethod
    def for_correlation(cls, grid, corr, **kwargs):
        return cls(grid, corr.times, **kwargs)

    @property
    def n_times(self):
        return self.times.size

    def atom(self, i, j):
        """Column (i, j) sampled at ``times``, including its scale."""
        return self.scale[i, j] * self._decay[:, i] * self._cos[:, j]

    def apply(self, coeffs):
        """Time series sum_ij coeffs[i, j] * column(i, j)."""
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != self.grid.shape:
            raise DimensionError(f"coefficients must have shape {self.grid.shape}, got {coeffs.shape}")
        if self._matrix is not None:
            return self._matrix @ coeffs.ravel()
        partial = self._cos @ (coeffs * self.scale).T  # (K, n_gamma)
        return np.einsum("kg,kg->k", partial, self._decay)

    def apply_adjoint(self, residual):
        """Transpose action: grid of <column(i, j), residual>."""
        residual = np.asarray(residual, dtype=float)
        if residual.shape != (self.n_times,):
            raise DimensionError(f"residual must have shape {(self.n_times,)}, got {residual.shape}")
        if self._matrix is not None:
            return (self._matrix.T @ residual).reshape(self.grid.shape)
        return ((self._decay * residual[:, None]).T @ self._cos) * self.scale

    def column_norms(self):
        """Euclidean norm of every scaled column, shape ``grid.shape``."""
        if self._col_norms is None:
            norm2 = (self._decay**2).T @ (self._cos**2)
            self._col_norms = np.sqrt(norm2) * self.scale
        return self._col_norms

    def columns(self, support):
        """Dense (n_times, len(support)) block for a list of (i, j) indices."""
        if len(support) == 0:
            return np.zeros((self.n_times, 0))
        idx = np.asarray(support, dtype=int)
        return self.scale[idx[:, 0], idx[:, 1]] * self._decay[:, idx[:, 0]] * self._cos[:, idx[:, 1]]


def operator_norm_estimate(meas, max_iter=50, rtol=1e-6, seed=0):
    """Spectral norm of ``meas`` by power iteration on A^T A."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(meas.grid.shape)
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(max_iter):
        y = meas.apply_adjoint(meas.apply(x))
        norm = np.linalg.norm(y)
        if norm == 0:
            return 0.0
        x = y / norm
        previous, estimate = estimate, np.sqrt(norm)
        if abs(estimate - previous) <= rtol * estimate:
            break
    return float(estimate)
