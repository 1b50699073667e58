"""Second-order time-convolutionless propagation with site-dephasing baths.

The Schroedinger-picture equation of motion is

    d rho/dt = -i [H, rho] - sum_n [A_n, L_n(t) rho - rho L_n(t)^dagger]
    L_n(t)   = int_0^t D_n(s) exp(-iHs) A_n exp(iHs) ds

with A_n = |n><n|.  Work happens in the eigenbasis of H, where the free
evolution is a phase per matrix element.  L_n is accumulated panel by
panel with 4-point Gauss-Legendre nodes, and the equation is stepped by
the integrating-factor (Lawson) fourth-order Runge-Kutta scheme, so only
the dissipator is subject to truncation error.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_density_matrix, check_positive, check_square_symmetric
from .baseline import TabulatedSpectralDensity
from .bathmodel import DrudeLorentzModel, KernelQuadrature, tabulated_bath_kernel
from .units import ANGULAR_PER_WAVENUMBER, energy2_to_angular2, thermal_beta

logger = logging.getLogger(__name__)

_PANEL_NODES, _PANEL_WEIGHTS = np.polynomial.legendre.leggauss(4)

TRACE_ABORT = 1e-6


class PropagationError(RuntimeError):
    """Raised when the integration leaves the physical regime."""

    def __init__(self, message, time):
        super().__init__(f"{message} at t = {time:g} fs")
        self.time = time


def fixed_sign_eigh(hamiltonian):
    """Ascending eigenpairs with each eigenvector's largest-magnitude entry positive."""
    values, vectors = np.linalg.eigh(hamiltonian)
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    return values, vectors * signs


@dataclass(frozen=True)
class ExcitonSystem:
    """Site Hamiltonian (cm^-1), one bath per site, and a temperature (K).

    A bath is a :class:`DrudeLorentzModel`, a
    :class:`TabulatedSpectralDensity`, or ``None`` for no coupling.
    """

    hamiltonian: np.ndarray
    site_baths: tuple
    temperature: float

    def __post_init__(self):
        h = check_square_symmetric(self.hamiltonian, "hamiltonian")
        if h.shape[0] < 2:
            raise ValueError("an exciton system needs at least two sites")
        if len(self.site_baths) != h.shape[0]:
            raise ValueError(
                f"expected {h.shape[0]} site baths, got {len(self.site_baths)}"
            )
        for b in self.site_baths:
            if b is not None and not isinstance(b, (DrudeLorentzModel, TabulatedSpectralDensity)):
                raise TypeError(f"unsupported bath type {type(b).__name__}")
        thermal_beta(self.temperature)
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "site_baths", tuple(self.site_baths))

    @property
    def n_sites(self):
        return self.hamiltonian.shape[0]

    def kernel(self, site, times):
        """D_n at ``times`` (fs) in (rad/fs)^2."""
        bath = self.site_baths[site]
        times = np.asarray(times, dtype=float)
        if bath is None:
            return np.zeros(times.shape, dtype=complex)
        if isinstance(bath, TabulatedSpectralDensity):
            values = tabulated_bath_kernel(bath, times, self.temperature)
        else:
            if not bath.atoms:
                return np.zeros(times.shape, dtype=complex)
            probe = np.linspace(0.0, times.max(initial=0.0), 65)
            values = KernelQuadrature(bath, probe, self.temperature)(times)
        values = np.where(times == 0, np.real(values) + 0j, values)
        return energy2_to_angular2(values)


def load_hamiltonian(path):
    """Read an N x N Hamiltonian (cm^-1) from CSV; ``#`` lines are comments."""
    h = np.loadtxt(Path(path), delimiter=",", comments="#", ndmin=2)
    return check_square_symmetric(h, "hamiltonian")


def fmo_hamiltonian():
    """The shipped seven-site FMO Hamiltonian in cm^-1."""
    return load_hamiltonian(Path(__file__).parent / "data" / "fmo_adolphs_renger.csv")


def site_state(n_sites, site):
    """Density matrix fully localized on ``site`` (0-based)."""
    if not 0 <= site < n_sites:
        raise ValueError(f"site {site} outside 0..{n_sites - 1}")
    rho = np.zeros((n_sites, n_sites), dtype=complex)
    rho[site, site] = 1.0
    return rho


@dataclass
class DensityTrajectory:
    """Density matrices ``matrices[k]`` at ``times[k]`` (fs)."""

    times: np.ndarray
    matrices: np.ndarray
    hamiltonian: np.ndarray
    basis: str = "site"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.basis not in ("site", "exciton"):
            raise ValueError("basis must be 'site' or 'exciton'")

    @property
    def n_sites(self):
        return self.matrices.shape[1]

    def eigenvectors(self):
        return fixed_sign_eigh(self.hamiltonian)[1]

    def in_basis(self, basis):
        if basis == self.basis:
            return self
        v = self.eigenvectors()
        if basis == "exciton":
            mats = np.einsum("ia,tij,jb->tab", v, self.matrices, v)
        else:
            mats = np.einsum("ai,tij,bj->tab", v, self.matrices, v)
        return DensityTrajectory(self.times, mats, self.hamiltonian, basis, self.diagnostics)

    def traces(self):
        return np.einsum("tii->t", self.matrices)

    def hermiticity_error(self):
        return float(np.max(np.abs(self.matrices - np.conj(np.swapaxes(self.matrices, 1, 2)))))

    def min_eigenvalue(self):
        herm = 0.5 * (self.matrices + np.conj(np.swapaxes(self.matrices, 1, 2)))
        return float(np.min(np.linalg.eigvalsh(herm)))


def _parse_selector(item, n):
    kind, _, rest = item.partition(":")
    if kind not in ("pop", "coh"):
        raise ValueError(f"unknown observable {item!r}; use pop:i or coh:i,j")
    idx = rest.split(",")
    try:
        idx = [int(i) for i in idx]
    except ValueError:
        raise ValueError(f"bad indices in observable {item!r}") from None
    if (kind == "pop" and len(idx) != 1) or (kind == "coh" and len(idx) != 2):
        raise ValueError(f"wrong number of indices in observable {item!r}")
    if any(not 1 <= i <= n for i in idx):
        raise ValueError(f"index out of range 1..{n} in observable {item!r}")
    return kind, [i - 1 for i in idx]


def observables(traj, which, basis="site"):
    """Time series for selectors such as ``"pop:1"`` or ``"coh:1,3"`` (1-based).

    Populations are real; coherences are complex.  ``basis`` selects site
    or exciton quantities.
    """
    if isinstance(which, str):
        which = [which]
    view = traj.in_basis(basis)
    out = {}
    for item in which:
        kind, idx = _parse_selector(item, traj.n_sites)
        if kind == "pop":
            out[item] = view.matrices[:, idx[0], idx[0]].real.copy()
        else:
            out[item] = view.matrices[:, idx[0], idx[1]].copy()
    return out


def _steps(t_max, dt):
    dt = check_positive(dt, "dt")
    t_max = check_positive(t_max, "t_max")
    n = int(round(t_max / dt))
    if n < 1 or abs(n * dt - t_max) > 1e-9 * max(t_max, 1.0):
        raise ValueError(f"dt = {dt} does not divide t_max = {t_max}")
    return n


def propagate(system, rho0, t_max, dt=1.0):
    """Integrate from ``rho0`` (site basis) to ``t_max`` fs with step ``dt``."""
    n = system.n_sites
    rho0 = check_density_matrix(rho0, n, tol=1e-10)
    n_steps = _steps(t_max, dt)
    h_cm = system.hamiltonian - np.mean(np.diag(system.hamiltonian)) * np.eye(n)
    energies, vecs = fixed_sign_eigh(h_cm)
    energies = energies * ANGULAR_PER_WAVENUMBER
    omega = energies[:, None] - energies[None, :]
    half = 0.5 * dt
    free_half = np.exp(-1j * omega * half)
    free_full = free_half * free_half

    # Kernel at every quadrature node of every half-step panel.
    starts = np.arange(2 * n_steps) * half
    node_t = (starts[:, None] + half * 0.5 * (_PANEL_NODES + 1.0)).ravel()
    node_w = np.tile(half * 0.5 * _PANEL_WEIGHTS, 2 * n_steps)
    phase = np.exp(-1j * omega[None, :, :] * node_t.reshape(-1, 4)[:, :, None, None])

    couplings = []
    kernels = {}
    for site in range(n):
        # sites sharing one bath object share its kernel
        key = id(system.site_baths[site])
        if key not in kernels:
            kernels[key] = system.kernel(site, node_t)
        d = kernels[key]
        if not np.any(d):
            continue
        a_tilde = np.outer(vecs[site], vecs[site]).astype(complex)
        # increments of G_ab(t) = int D(s) exp(-i w_ab s) ds per half panel
        incr = np.einsum("pq,pqab->pab", (node_w * d).reshape(-1, 4), phase)
        lam = np.concatenate([np.zeros((1, n, n), complex), np.cumsum(incr, axis=0)])
        couplings.append((a_tilde, a_tilde[None] * lam))
    logger.debug("propagating %d sites with %d coupled baths", n, len(couplings))

    def dissipator(rho, k):
        out = np.zeros_like(rho)
        for a, lam in couplings:
            left = lam[k] @ rho - rho @ lam[k].conj().T
            out -= a @ left - left @ a
        return out

    rho = vecs.T @ rho0 @ vecs
    mats = np.empty((n_steps + 1, n, n), dtype=complex)
    mats[0] = rho
    for s in range(n_steps):
        k = 2 * s
        k1 = dissipator(rho, k)
        free_rho = free_half * rho
        k2 = dissipator(free_half * (rho + half * k1), k + 1)
        k3 = dissipator(free_rho + half * k2, k + 1)
        k4 = dissipator(free_full * rho + dt * free_half * k3, k + 2)
        rho = free_full * rho + (dt / 6.0) * (
            free_full * k1 + 2.0 * free_half * (k2 + k3) + k4
        )
        mats[s + 1] = rho
        t = (s + 1) * dt
        if not np.all(np.isfinite(rho)):
            raise PropagationError("non-finite density matrix", t)
        drift = abs(np.trace(rho) - 1.0)
        if drift > TRACE_ABORT:
            raise PropagationError(f"trace drift {drift:.3e}", t)

    site_mats = np.einsum("ia,tab,jb->tij", vecs, mats, vecs)
    # skip the basis round trip at t = 0
    site_mats[0] = rho0
    times = np.arange(n_steps + 1) * dt
    traj = DensityTrajectory(times, site_mats, system.hamiltonian.copy(), "site")
    traj.diagnostics = {
        "max_trace_error": float(np.max(np.abs(traj.traces() - 1.0))),
        "hermiticity_error": traj.hermiticity_error(),
        "min_eigenvalue": traj.min_eigenvalue(),
        "coupled_sites": len(couplings),
    }
    return traj
