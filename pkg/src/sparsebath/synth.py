"""Synthetic damped-cosine correlations and Gaussian gap trajectories.

Randomness comes from a Philox counter-based generator seeded with
``rng_seed``, so outputs are bit-identical across platforms for a fixed
numpy version.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import fft as sp_fft

from ._validation import check_count, check_positive
from .dictionary import AtomGrid, default_grid
from .solver import Atom
from .timeseries import CorrelationSeries, GapTrajectory
from .units import ANGULAR_PER_WAVENUMBER


def make_rng(seed):
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True)
class SynthSpec:
    """Generating atoms plus sampling and noise settings.

    ``noise_sigma`` is relative to C(0) = sum of amplitudes.
    """

    atoms: tuple
    n_samples: int
    dt: float
    noise_sigma: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        atoms = tuple(a if isinstance(a, Atom) else Atom(*map(float, a)) for a in self.atoms)
        for a in atoms:
            if a.gamma < 0 or a.omega < 0:
                raise ValueError("atom gamma and omega must be nonnegative")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "n_samples", check_count(self.n_samples, "n_samples", 1))
        object.__setattr__(self, "dt", check_positive(self.dt, "dt"))
        if not (np.isfinite(self.noise_sigma) and self.noise_sigma >= 0):
            raise ValueError("noise_sigma must be a nonnegative number")

    @property
    def c0(self):
        return float(sum(a.amplitude for a in self.atoms))

    def off_grid(self, grid=None):
        """Flags marking atoms that do not sit on ``grid`` nodes."""
        grid = grid if grid is not None else default_grid()
        return tuple(_on_grid(grid, a) is False for a in self.atoms)

    def to_dict(self):
        return {
            "atoms": [
                {"gamma_cm1": a.gamma, "omega_cm1": a.omega, "amplitude": a.amplitude}
                for a in self.atoms
            ],
            "n_samples": self.n_samples,
            "dt_fs": self.dt,
            "noise_sigma": self.noise_sigma,
            "rng_seed": self.rng_seed,
        }

    @classmethod
    def from_dict(cls, data):
        atoms = tuple(
            Atom(float(a["gamma_cm1"]), float(a["omega_cm1"]), float(a["amplitude"]))
            for a in data.get("atoms", [])
        )
        return cls(
            atoms,
            int(data["n_samples"]),
            float(data.get("dt_fs", 4.0)),
            float(data.get("noise_sigma", 0.0)),
            int(data.get("rng_seed", 0)),
        )

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def _on_grid(grid: AtomGrid, atom):
    return bool(
        np.any(np.isclose(grid.gammas, atom.gamma, rtol=0, atol=1e-9))
        and np.any(np.isclose(grid.omegas, atom.omega, rtol=0, atol=1e-9))
    )


def target_correlation(atoms, times):
    """Noise-free sum of a * exp(-g t) cos(W t), frequencies in cm^-1, t in fs."""
    times = np.asarray(times, dtype=float)
    out = np.zeros_like(times)
    for a in atoms:
        g = a.gamma * ANGULAR_PER_WAVENUMBER
        w = a.omega * ANGULAR_PER_WAVENUMBER
        out += a.amplitude * np.exp(-g * times) * np.cos(w * times)
    return out


def synth_correlation(spec):
    """C_k on ``n_samples`` lags with optional white noise."""
    times = np.arange(spec.n_samples) * spec.dt
    values = target_correlation(spec.atoms, times)
    if spec.noise_sigma > 0:
        rng = make_rng(spec.rng_seed)
        values = values + spec.noise_sigma * abs(spec.c0) * rng.standard_normal(spec.n_samples)
    # CorrelationSeries needs C_0 >= 0; a noise draw may push it negative
    values[0] = max(values[0], 0.0)
    return CorrelationSeries(values, spec.dt)


def synth_gap_trajectory(spec, n_steps, mean=0.0):
    """Stationary Gaussian gap trajectory whose autocovariance is the atom sum.

    Uses circulant embedding: the target covariance is wrapped onto a
    period of ``2 * n_steps`` samples and every Fourier mode gets an
    independent complex Gaussian amplitude weighted by the square root of
    its spectral weight (negative weights from the wrap are clipped).
    ``noise_sigma`` adds white noise of variance ``noise_sigma * C(0)``.
    """
    n_steps = check_count(n_steps, "n_steps", 2)
    if not spec.atoms:
        return GapTrajectory(np.full(n_steps, float(mean)), spec.dt)
    m = 2 * n_steps
    lags = np.arange(n_steps + 1) * spec.dt
    cov = target_correlation(spec.atoms, lags)
    wrapped = np.concatenate([cov, cov[-2:0:-1]])
    weights = np.clip(sp_fft.fft(wrapped).real, 0.0, None)
    rng = make_rng(spec.rng_seed)
    z = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    field = sp_fft.fft(np.sqrt(weights / m) * z)
    samples = field.real[:n_steps] + mean
    if spec.noise_sigma > 0:
        samples = samples + np.sqrt(spec.noise_sigma * abs(spec.c0)) * rng.standard_normal(n_steps)
    return GapTrajectory(samples, spec.dt)
