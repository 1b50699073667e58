"""Closed-form Drude-Lorentz spectral densities and the bath kernel D(t).

Each recovered atom (gamma, Omega, lam) contributes

    J(w) = c * beta * w * lam * [ g / (g^2 + (w - Omega)^2) + g / (g^2 + (w + Omega)^2) ]

with all frequencies in cm^-1, ``lam`` in cm^-2 and J in cm^-1.  The
default ``normalization="transform"`` uses c = 1/2, which is the exact
cosine transform of lam * exp(-g t) cos(Omega t) under the harmonic
prefactor; ``"printed"`` uses c = 1/sqrt(pi).

The kernel is

    D(t) = int_0^wmax dw J(w) [coth(beta w / 2) cos(w t) - i sin(w t)]

in cm^-2, evaluated by adaptive Gauss-Legendre panels.  The Lorentzian
tails make J decay only as 1/w, so the integral is cut at ``omega_max``.
"""

import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicSpline

from ._validation import check_positive
from .solver import Atom
from .units import ANGULAR_PER_WAVENUMBER, thermal_beta

logger = logging.getLogger(__name__)

NORMALIZATIONS = {"transform": 0.5, "printed": 1.0 / np.sqrt(np.pi)}

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


class QuadratureWarning(UserWarning):
    """Adaptive quadrature stopped short of its tolerance."""


@dataclass(frozen=True)
class DrudeLorentzModel:
    """Sum of Drude-Lorentz peaks at a reference temperature (kelvin).

    Atoms with ``gamma == 0`` are widened to ``min_gamma`` (cm^-1) because
    the closed form degenerates to delta peaks there.
    """

    atoms: tuple
    temperature: float
    normalization: str = "transform"
    omega_max: float = 4000.0
    min_gamma: float = 1.0
    widened: tuple = field(default=(), compare=False)

    def __post_init__(self):
        thermal_beta(self.temperature)
        check_positive(self.omega_max, "omega_max")
        check_positive(self.min_gamma, "min_gamma")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {sorted(NORMALIZATIONS)}")
        atoms = []
        widened = list(self.widened)
        for a in self.atoms:
            a = a if isinstance(a, Atom) else Atom(*a)
            if a.gamma < 0:
                raise ValueError("atom damping must be nonnegative")
            if a.gamma == 0:
                widened.append((a.gamma, a.omega))
                a = Atom(self.min_gamma, a.omega, a.amplitude)
            atoms.append(a)
        if len(widened) > len(self.widened):
            warnings.warn(
                f"{len(widened) - len(self.widened)} zero-width atom(s) widened to "
                f"gamma={self.min_gamma} cm^-1",
                stacklevel=3,
            )
        object.__setattr__(self, "atoms", tuple(atoms))
        object.__setattr__(self, "widened", tuple(widened))

    @classmethod
    def from_spectrum(cls, spectrum, temperature, **kwargs):
        return cls(spectrum.atoms, temperature, **kwargs)

    @property
    def gammas(self):
        return np.array([a.gamma for a in self.atoms], dtype=float)

    @property
    def omegas(self):
        return np.array([a.omega for a in self.atoms], dtype=float)

    @property
    def amplitudes(self):
        return np.array([a.amplitude for a in self.atoms], dtype=float)

    @property
    def beta(self):
        return thermal_beta(self.temperature)

    def scaled(self, factor):
        """Copy with every amplitude multiplied by ``factor``."""
        atoms = tuple(Atom(a.gamma, a.omega, a.amplitude * factor) for a in self.atoms)
        return DrudeLorentzModel(
            atoms, self.temperature, self.normalization, self.omega_max, self.min_gamma
        )

    def j_over_omega(self, omega):
        """J(w)/w in cm^-1 per cm^-1, finite at w = 0."""
        w = np.asarray(omega, dtype=float)[..., None]
        g, om, lam = self.gammas, self.omegas, self.amplitudes
        lor = g / (g**2 + (w - om) ** 2) + g / (g**2 + (w + om) ** 2)
        return NORMALIZATIONS[self.normalization] * self.beta * (lor @ lam)

    def to_dict(self):
        return {
            "atoms": [
                {"gamma_cm1": a.gamma, "omega_cm1": a.omega, "amplitude": a.amplitude}
                for a in self.atoms
            ],
            "temperature": self.temperature,
            "normalization": self.normalization,
            "omega_max": self.omega_max,
        }

    @classmethod
    def from_dict(cls, data, temperature=None):
        atoms = tuple(
            Atom(float(a["gamma_cm1"]), float(a["omega_cm1"]), float(a["amplitude"]))
            for a in data["atoms"]
        )
        temperature = temperature if temperature is not None else data.get("temperature")
        if temperature is None:
            raise ValueError("model file has no temperature; supply one")
        return cls(
            atoms,
            float(temperature),
            normalization=data.get("normalization", "transform"),
            omega_max=float(data.get("omega_max", 4000.0)),
        )

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path, temperature=None):
        return cls.from_dict(json.loads(Path(path).read_text()), temperature)


def evaluate_sd(model, omega):
    """J(omega) in cm^-1 at wavenumbers ``omega`` (scalar or array)."""
    omega = np.asarray(omega, dtype=float)
    if not model.atoms:
        return np.zeros_like(omega)
    return omega * model.j_over_omega(omega)


def reorganization_energy(model, rtol=1e-8):
    """(1/pi) int_0^inf J(w)/w dw in cm^-1, by adaptive quadrature per atom."""
    if not model.atoms:
        return 0.0
    pref = NORMALIZATIONS[model.normalization] * model.beta
    total = 0.0
    magnitude = 0.0
    error = 0.0
    for a in model.atoms:
        g, om = a.gamma, a.omega

        def lorentz_pair(w, g=g, om=om):
            return g / (g**2 + (w - om) ** 2) + g / (g**2 + (w + om) ** 2)

        split = om + 200.0 * g
        points = sorted(
            p for k in (1.0, 5.0, 25.0) for p in (om - k * g, om, om + k * g) if 0 < p < split
        )
        head, e1 = integrate.quad(lorentz_pair, 0.0, split, points=points or None,
                                  epsabs=0.0, epsrel=rtol * 1e-2, limit=500)
        tail, e2 = integrate.quad(lorentz_pair, split, np.inf, epsabs=0.0,
                                  epsrel=rtol * 1e-2, limit=500)
        total += a.amplitude * (head + tail)
        magnitude += abs(a.amplitude) * (head + tail)
        error += abs(a.amplitude) * (e1 + e2)
    value = pref * total / np.pi
    # relative to the summed magnitudes so cancelling signs do not inflate it
    achieved = error / magnitude if magnitude else 0.0
    if achieved > rtol:
        warnings.warn(
            f"reorganization energy quadrature reached only {achieved:.2e} "
            f"relative accuracy",
            QuadratureWarning,
            stacklevel=2,
        )
    return float(value)


def _xcothx(x):
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 + x * x / 3.0, safe / np.tanh(safe))


class KernelQuadrature:
    """Adaptive Gauss-Legendre panel rule for D(t) over a set of times.

    Panels start at peak-aware breakpoints, no wider than the spacing
    that keeps ``w * t_max`` below ~pi per panel, and are bisected until
    the 16-point result of each panel agrees with that of its two halves
    to ``rtol`` of the accumulated kernel for every probe time.
    """

    def __init__(self, model, times, temperature=None, rtol=1e-10, max_rounds=30):
        self.model = model
        self.temperature = model.temperature if temperature is None else float(temperature)
        self.beta_kernel = thermal_beta(self.temperature)
        probe = np.unique(np.concatenate([[0.0], np.atleast_1d(np.asarray(times, float))]))
        if probe[0] < 0:
            raise ValueError("kernel times must be nonnegative")
        t_max = probe[-1]
        self.t_max = t_max
        edges = self._initial_edges(t_max)
        self.converged = True
        done_nodes, done_weights = [], []
        pending = np.column_stack([edges[:-1], edges[1:]])
        scale = None
        for _ in range(max_rounds):
            if pending.size == 0:
                break
            coarse = self._panel_values(pending, probe)
            mid = 0.5 * (pending[:, 0] + pending[:, 1])
            left = np.column_stack([pending[:, 0], mid])
            right = np.column_stack([mid, pending[:, 1]])
            fine = self._panel_values(left, probe) + self._panel_values(right, probe)
            if scale is None:
                scale = max(np.max(np.abs(fine.sum(axis=0))), 1e-300)
            err = np.max(np.abs(fine - coarse), axis=1)
            ok = err <= rtol * scale * (pending[:, 1] - pending[:, 0]) / model.omega_max + 1e-300
            for panels in (left[ok], right[ok]):
                n, w = self._nodes(panels)
                done_nodes.append(n)
                done_weights.append(w)
            pending = np.concatenate([left[~ok], right[~ok]])
        if pending.size:
            self.converged = False
            n, w = self._nodes(pending)
            done_nodes.append(n)
            done_weights.append(w)
            warnings.warn("kernel quadrature hit its refinement limit", QuadratureWarning,
                          stacklevel=2)
        self.nodes = np.concatenate(done_nodes)
        weights = np.concatenate(done_weights)
        jw = evaluate_sd(model, self.nodes)
        self.cos_weights = weights * self._j_coth(self.nodes)
        self.sin_weights = weights * jw

    def _initial_edges(self, t_max):
        wmax = self.model.omega_max
        width = wmax / 8.0
        if t_max > 0:
            width = min(width, 1.0 / (2.0 * ANGULAR_PER_WAVENUMBER / (2 * np.pi) * t_max))
        edges = [np.linspace(0.0, wmax, int(np.ceil(wmax / width)) + 1)]
        for a in self.model.atoms:
            offsets = a.gamma * np.array([0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0])
            edges.append(a.omega + offsets)
            edges.append(a.omega - offsets)
        e = np.concatenate(edges)
        e = np.unique(e[(e >= 0) & (e <= wmax)])
        return e

    @staticmethod
    def _nodes(panels):
        a, b = panels[:, :1], panels[:, 1:]
        half = 0.5 * (b - a)
        nodes = (0.5 * (a + b) + half * _GL_NODES).ravel()
        weights = (half * _GL_WEIGHTS).ravel()
        return nodes, weights

    def _j_coth(self, w):
        # J coth(beta w/2) = (J/w) * (2/beta) * x coth x with x = beta w / 2
        x = 0.5 * self.beta_kernel * w
        return self.model.j_over_omega(w) * (2.0 / self.beta_kernel) * _xcothx(x)

    def _panel_values(self, panels, times):
        nodes, weights = self._nodes(panels)
        k = len(_GL_NODES)
        re = (weights * self._j_coth(nodes)).reshape(-1, k)
        im = (weights * evaluate_sd(self.model, nodes)).reshape(-1, k)
        phase = np.multiply.outer(nodes.reshape(-1, k), times * ANGULAR_PER_WAVENUMBER)
        vals = np.einsum("pk,pkt->pt", re, np.cos(phase)) - 1j * np.einsum(
            "pk,pkt->pt", im, np.sin(phase)
        )
        return vals

    def __call__(self, t, chunk=2048):
        """D(t) in cm^-2 for times ``t`` (fs)."""
        t = np.asarray(t, dtype=float)
        flat = t.ravel()
        out = np.empty(flat.size, dtype=complex)
        for s in range(0, flat.size, chunk):
            phase = np.multiply.outer(flat[s : s + chunk] * ANGULAR_PER_WAVENUMBER, self.nodes)
            out[s : s + chunk] = np.cos(phase) @ self.cos_weights - 1j * (
                np.sin(phase) @ self.sin_weights
            )
        return out.reshape(t.shape)

    def tail_bound(self, t):
        """Bound on |integral beyond omega_max| for t > 0 (inf at t = 0)."""
        t = np.asarray(t, dtype=float)
        wmax = self.model.omega_max
        edge = abs(float(self._j_coth(np.array([wmax]))[0])) + abs(
            float(evaluate_sd(self.model, wmax))
        )
        with np.errstate(divide="ignore"):
            return np.where(t > 0, 2.0 * edge / (ANGULAR_PER_WAVENUMBER * t), np.inf)


def bath_kernel(model, t, temperature=None, rtol=1e-10):
    """D(t) in cm^-2; ``temperature`` overrides the model's for the coth factor."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("kernel times must be nonnegative")
    if temperature is not None:
        thermal_beta(temperature)
    if not model.atoms:
        return np.zeros(t_arr.shape, dtype=complex)[()]
    quad = KernelQuadrature(model, t_arr, temperature, rtol=rtol)
    out = quad(t_arr)
    # sin(0) = 0 exactly
    out = np.where(t_arr == 0, out.real + 0j, out)
    return out[()]


@dataclass
class BathKernel:
    """D(t) cached on a fine internal grid with cubic-spline interpolation.

    ``times``/``values`` are the samples on the requested grid.
    """

    model: DrudeLorentzModel
    times: np.ndarray
    values: np.ndarray
    temperature: float
    _spline_re: CubicSpline = field(repr=False, default=None)
    _spline_im: CubicSpline = field(repr=False, default=None)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if np.any((t < 0) | (t > self.times[-1] * (1 + 1e-12))):
            raise ValueError("interpolation outside the tabulated range")
        return self._spline_re(t) + 1j * self._spline_im(t)


def tabulate_kernel(model, t_max, dt, temperature=None, resolution=0.03):
    """Tabulate D(t) on ``0, dt, ..., t_max``.

    Samples are stored on an internal grid refined so that
    ``omega_max * h <= resolution`` rad, which keeps cubic interpolation
    accurate despite the oscillation at the cutoff frequency.
    """
    dt = check_positive(dt, "dt")
    t_max = float(t_max)
    if not t_max >= dt:
        raise ValueError("t_max must be at least dt")
    n = int(round(t_max / dt))
    times = np.arange(n + 1) * dt
    temp = model.temperature if temperature is None else float(temperature)
    if not model.atoms:
        values = np.zeros(times.size, dtype=complex)
        zero = CubicSpline(times, np.zeros(times.size)) if times.size > 1 else None
        return BathKernel(model, times, values, temp, zero, zero)
    refine = max(1, int(np.ceil(dt * ANGULAR_PER_WAVENUMBER * model.omega_max / resolution)))
    fine = np.arange(n * refine + 1) * (dt / refine)
    quad = KernelQuadrature(model, np.linspace(0.0, times[-1], 65), temp)
    fine_vals = quad(fine)
    fine_vals[0] = fine_vals[0].real
    spline_re = CubicSpline(fine, fine_vals.real)
    spline_im = CubicSpline(fine, fine_vals.imag)
    return BathKernel(model, times, fine_vals[::refine].copy(), temp, spline_re, spline_im)


def tabulated_bath_kernel(sd, t, temperature=None):
    """D(t) from a tabulated J by trapezoid quadrature over its own grid.

    At w = 0 the integrand J coth(beta w/2) is replaced by its limit
    (2/beta) * lim J/w, estimated from the first nonzero grid point.
    """
    t = np.asarray(t, dtype=float)
    beta = thermal_beta(sd.temperature if temperature is None else temperature)
    w, j = sd.frequencies, sd.values
    with np.errstate(divide="ignore", invalid="ignore"):
        j_over_w = np.where(w > 0, j / np.where(w > 0, w, 1.0), 0.0)
    if w[0] == 0 and w.size > 1:
        j_over_w[0] = j_over_w[1]
    jcoth = j_over_w * (2.0 / beta) * _xcothx(0.5 * beta * w)
    weights = np.empty_like(w)
    dw = np.diff(w)
    weights[0] = dw[0] / 2
    weights[-1] = dw[-1] / 2
    weights[1:-1] = (dw[:-1] + dw[1:]) / 2
    flat = t.ravel()
    out = np.empty(flat.size, dtype=complex)
    for s in range(0, flat.size, 1024):
        phase = np.multiply.outer(flat[s : s + 1024] * ANGULAR_PER_WAVENUMBER, w)
        out[s : s + 1024] = np.cos(phase) @ (weights * jcoth) - 1j * (
            np.sin(phase) @ (weights * j)
        )
    return out.reshape(t.shape)[()]
