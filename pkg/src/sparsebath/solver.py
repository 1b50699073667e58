"""TV + L1 regularised recovery of damped-cosine coefficients.

The constrained problem

    min ||grad lam||_1 + mu ||lam||_1   s.t.  ||A lam - C||_2 < eta ||C||_2

is approached through its penalised form

    min 1/2 ||A x - C||^2 + tau (||grad x||_1 + mu ||x||_1)

solved by two-step iterative shrinkage/thresholding (TwIST) with a
continuation loop that halves ``tau``.  Gradient-TV favours connected
blobs on the (gamma, omega) grid over isolated spikes, and the blob
columns are numerically rank deficient, so after every continuation
stage the support found by TwIST is refined by orthogonal least squares
(forward greedy selection restricted to that support) followed by
backward elimination under the same residual constraint, and a local
polish that moves single atoms to neighbouring grid cells while that
lowers the residual.  Once a refined atom set meets the residual
tolerance, a few more stages run (``confirm_stages``) and the sparsest
passing set wins.
"""

import logging
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg

from ._validation import DimensionError, check_count, check_positive
from .dictionary import operator_norm_estimate

logger = logging.getLogger(__name__)


class ConvergenceWarning(UserWarning):
    """The solver stopped before meeting its residual tolerance."""


@dataclass(frozen=True)
class Atom:
    """One damped cosine: damping and frequency in cm^-1, amplitude in cm^-2."""

    gamma: float
    omega: float
    amplitude: float


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of :func:`solve` and :func:`debias`.

    ``eta`` and ``debias_eta`` are relative to ``||C||_2``.  The TwIST
    weights follow the usual spectral recipe for an operator rescaled to
    unit norm: ``alpha = 2 / (1 + sqrt(1 - rho^2))`` and
    ``beta = 2 alpha / (1 + xi)`` with ``xi = (1 - rho) / (1 + rho)``.
    """

    mu: float = 1.0
    eta: float = 1e-7
    stall_iters: int = 100
    max_iters: int = 20000
    tv_inner_iters: int = 10
    twist_rho: float = 0.99
    debias: bool = True
    debias_eta: float = 1e-9
    stage_iters: int = 100
    continuation_factor: float = 0.5
    refine: bool = True
    max_refine_atoms: int = 100
    prune_floor: float = 1e-12
    stall_tol: float = 1e-14
    plateau_stages: int = 12
    plateau_tol: float = 0.01
    confirm_stages: int = 3

    def __post_init__(self):
        if not self.mu >= 0:
            raise ValueError("mu must be nonnegative")
        check_positive(self.eta, "eta")
        check_positive(self.debias_eta, "debias_eta")
        if self.debias and not self.debias_eta < self.eta:
            raise ValueError("debias_eta must be smaller than eta when debiasing")
        check_count(self.stall_iters, "stall_iters")
        check_count(self.max_iters, "max_iters")
        check_count(self.tv_inner_iters, "tv_inner_iters")
        check_count(self.stage_iters, "stage_iters")
        check_count(self.max_refine_atoms, "max_refine_atoms")
        check_count(self.plateau_stages, "plateau_stages")
        check_count(self.confirm_stages, "confirm_stages", 0)
        if not 0 <= self.plateau_tol < 1:
            raise ValueError("plateau_tol must lie in [0, 1)")
        if not 0 < self.twist_rho < 1:
            raise ValueError("twist_rho must lie in (0, 1)")
        if not 0 < self.continuation_factor < 1:
            raise ValueError("continuation_factor must lie in (0, 1)")

    @property
    def twist_alpha(self):
        return 2.0 / (1.0 + np.sqrt(1.0 - self.twist_rho**2))

    @property
    def twist_beta(self):
        xi = (1.0 - self.twist_rho) / (1.0 + self.twist_rho)
        return 2.0 * self.twist_alpha / (1.0 + xi)


@dataclass(frozen=True)
class SparseSpectrum:
    """Recovered atoms plus solver diagnostics.

    ``residual_norm`` is ``||A lam - C||_2`` in cm^-2 and
    ``relative_residual`` the same divided by ``||C||_2``.
    """

    atoms: tuple
    residual_norm: float
    relative_residual: float
    iterations: int
    debias_applied: bool = False
    converged: bool = True
    termination: str = "residual"
    dropped: tuple = ()
    objective_history: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        keys = [(a.gamma, a.omega) for a in self.atoms]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate (gamma, omega) atoms")

    def __len__(self):
        return len(self.atoms)

    @property
    def gammas(self):
        return np.array([a.gamma for a in self.atoms])

    @property
    def omegas(self):
        return np.array([a.omega for a in self.atoms])

    @property
    def amplitudes(self):
        return np.array([a.amplitude for a in self.atoms])

    def to_dict(self):
        return {
            "atoms": [
                {"gamma_cm1": a.gamma, "omega_cm1": a.omega, "amplitude": a.amplitude}
                for a in self.atoms
            ],
            "diagnostics": {
                "residual_norm": self.residual_norm,
                "relative_residual": self.relative_residual,
                "iterations": self.iterations,
                "debias_applied": self.debias_applied,
                "converged": self.converged,
                "termination": self.termination,
                "dropped": [list(d) for d in self.dropped],
            },
        }


# -- regulariser -------------------------------------------------------------


def _grad(x):
    return np.diff(x, axis=0), np.diff(x, axis=1)


def _grad_adjoint(p_gamma, p_omega, shape):
    out = np.zeros(shape)
    out[:-1] -= p_gamma
    out[1:] += p_gamma
    out[:, :-1] -= p_omega
    out[:, 1:] += p_omega
    return out


def total_variation(x):
    """Anisotropic TV: sum of absolute forward differences along both axes."""
    dg, dw = _grad(x)
    return float(np.abs(dg).sum() + np.abs(dw).sum())


def _soft(x, thresh):
    return np.sign(x) * np.maximum(np.abs(x) - thresh, 0.0)


def _tv_denoise(v, weight, iters, dual=None):
    """Fast dual projected gradient for 1/2||x - v||^2 + weight * TV(x).

    Returns the primal estimate and the dual pair, which callers may pass
    back in to warm-start the next call.
    """
    if weight <= 0:
        return v.copy(), dual
    if dual is None:
        dual = (np.zeros((v.shape[0] - 1, v.shape[1])), np.zeros((v.shape[0], v.shape[1] - 1)))
    p = dual
    q = dual
    t = 1.0
    # 8 bounds ||grad||^2 on a 2-D grid
    step = 1.0 / (8.0 * weight)
    for _ in range(iters):
        x = v - weight * _grad_adjoint(*q, v.shape)
        dg, dw = _grad(x)
        p_new = (np.clip(q[0] + step * dg, -1.0, 1.0), np.clip(q[1] + step * dw, -1.0, 1.0))
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        q = tuple(a + (t - 1.0) / t_new * (a - b) for a, b in zip(p_new, p))
        p, t = p_new, t_new
    return v - weight * _grad_adjoint(*p, v.shape), p


def tv_l1_prox(grid, tv_weight, l1_weight, inner_iters=10):
    """Approximate proximal map of ``tv_weight*TV + l1_weight*||.||_1``.

    ``inner_iters`` dual-projection sweeps of anisotropic TV denoising
    (forward differences, replicate boundary) followed by soft
    thresholding, which is exact for this composite when the TV step is.
    """
    if tv_weight < 0 or l1_weight < 0:
        raise ValueError("weights must be nonnegative")
    x, _ = _tv_denoise(np.asarray(grid, dtype=float), tv_weight, inner_iters)
    return _soft(x, l1_weight)


# -- support refinement --------------------------------------------------------


def _least_squares(columns, y):
    coef, *_ = linalg.lstsq(columns, y, lapack_driver="gelsd")
    return coef, float(np.linalg.norm(columns @ coef - y))


def _orthogonal_least_squares(meas, y, mask, target, max_atoms):
    """Greedy forward selection by orthogonal least squares.

    Each step picks the atom (restricted to ``mask``) whose component
    orthogonal to the current span best explains the residual.  Scores use
    ``<a_j, r> / ||a_j - QQ^T a_j||``; the projected norms are tracked
    through one adjoint application per new basis vector.
    """
    norm2 = meas.column_norms() ** 2
    proj2 = np.zeros_like(norm2)
    allowed = mask & (norm2 > 0)
    basis = []
    chosen = []
    r = y.copy()
    while len(chosen) < max_atoms and np.linalg.norm(r) >= target:
        perp2 = norm2 - proj2
        usable = allowed & (perp2 > 1e-10 * norm2)
        if not usable.any():
            break
        corr = meas.apply_adjoint(r)
        scores = np.where(usable, np.abs(corr) / np.sqrt(np.where(usable, perp2, 1.0)), -1.0)
        k = np.unravel_index(int(np.argmax(scores)), scores.shape)
        allowed[k] = False
        q = meas.columns([k])[:, 0]
        for _ in range(2):
            for b in basis:
                q -= b * (b @ q)
        q_norm = np.linalg.norm(q)
        if q_norm == 0:
            continue
        q /= q_norm
        basis.append(q)
        chosen.append(tuple(int(v) for v in k))
        r -= q * (q @ r)
        proj2 += meas.apply_adjoint(q) ** 2
    return chosen


def _backward_eliminate(meas, y, support, target):
    """Drop atoms one at a time while the LS residual stays below ``target``."""
    support = list(support)
    while len(support) > 1:
        cols = meas.columns(support)
        _, rp, perm = linalg.qr(cols, mode="economic", pivoting=True)
        diag = np.abs(np.diag(rp))
        rank = int(np.sum(diag > 1e-10 * diag[0]))
        if rank < len(support):
            # numerically dependent columns add nothing to the fit
            keep = sorted(perm[:rank])
            support = [support[k] for k in keep]
            continue
        q, r = linalg.qr(cols, mode="economic")
        coef = linalg.solve_triangular(r, q.T @ y)
        resid2 = float(np.sum((cols @ coef - y) ** 2))
        rinv = linalg.solve_triangular(r, np.eye(r.shape[0]))
        # increase of the squared residual when column k is removed
        cost = coef**2 / np.sum(rinv**2, axis=1)
        k = int(np.argmin(cost))
        if resid2 + cost[k] >= target**2:
            break
        support.pop(k)
    return support


def _polish(meas, y, support, max_sweeps=50):
    """Move single atoms to neighbouring grid nodes while the LS residual drops.

    Keeps the atom count fixed; each move is the best of a 3 x 5 window in
    (gamma, omega) index around one atom, scored in closed form from the
    projection onto the other atoms.
    """
    support = list(support)
    shape = meas.grid.shape
    if len(support) == 0:
        return support
    offsets = [(di, dj) for di in (-1, 0, 1) for dj in (-2, -1, 0, 1, 2) if (di, dj) != (0, 0)]
    for _ in range(max_sweeps):
        moved = False
        for k in range(len(support)):
            others = support[:k] + support[k + 1 :]
            q = linalg.qr(meas.columns(others), mode="economic")[0] if others else None
            r_o = y - q @ (q.T @ y) if others else y.copy()
            taken = set(support)
            i0, j0 = support[k]
            cands = [support[k]] + [
                (i0 + di, j0 + dj)
                for di, dj in offsets
                if 0 <= i0 + di < shape[0] and 0 <= j0 + dj < shape[1]
                and (i0 + di, j0 + dj) not in taken
            ]
            c = meas.columns(cands)
            if others:
                c = c - q @ (q.T @ c)
            norms2 = np.sum(c * c, axis=0)
            gain = np.where(norms2 > 1e-20 * norms2.max(), (c.T @ r_o) ** 2 / np.maximum(norms2, 1e-300), 0.0)
            best = int(np.argmax(gain))
            if best != 0 and gain[best] > gain[0] * (1 + 1e-10):
                support[k] = cands[best]
                moved = True
        if not moved:
            break
    return support


def _refine(meas, y, x, cfg, target):
    """Sparse atom set inside the support of ``x`` fitting ``y`` to ``target``."""
    mask = x != 0
    if not mask.any():
        return [], np.zeros(0), float(np.linalg.norm(y))
    max_atoms = min(cfg.max_refine_atoms, meas.n_times)
    support = _orthogonal_least_squares(meas, y, mask, target, max_atoms)
    if not support:
        return [], np.zeros(0), float(np.linalg.norm(y))
    if _least_squares(meas.columns(support), y)[1] < target:
        support = _backward_eliminate(meas, y, support, target)
        support = _polish(meas, y, support)
    coef, resid = _least_squares(meas.columns(support), y)
    return support, coef, resid


# -- main solver ---------------------------------------------------------------


def _spectrum_from(meas, support, coef, cfg, **kwargs):
    atoms = []
    for (i, j), c in zip(support, coef):
        amp = float(c * meas.scale[i, j])
        if abs(amp) > cfg.prune_floor:
            atoms.append(Atom(float(meas.grid.gammas[i]), float(meas.grid.omegas[j]), amp))
    atoms.sort(key=lambda a: (a.omega, a.gamma))
    return SparseSpectrum(tuple(atoms), **kwargs)


def solve(corr, meas, cfg=None):
    """Recover a sparse damped-cosine expansion of ``corr``.

    Parameters
    ----------
    corr : CorrelationSeries
    meas : Measurement
        Must be sampled at ``corr.times``.
    cfg : SolverConfig, optional

    Returns
    -------
    SparseSpectrum
        Debiased when ``cfg.debias`` is set.  ``converged`` is False (and a
        :class:`ConvergenceWarning` issued) when neither the residual
        tolerance nor the stall criterion was met within ``max_iters``.
    """
    cfg = cfg or SolverConfig()
    y = np.asarray(corr.values, dtype=float)
    if y.shape != (meas.n_times,):
        raise DimensionError(
            f"correlation has {y.size} lags but the measurement has {meas.n_times} times"
        )
    if not np.allclose(np.arange(y.size) * corr.dt, meas.times, rtol=1e-12, atol=1e-9):
        raise DimensionError("measurement times do not match the correlation lags")
    y_norm = float(np.linalg.norm(y))
    if y_norm == 0.0:
        return SparseSpectrum((), 0.0, 0.0, 0, debias_applied=False)

    target = cfg.eta * y_norm
    lipschitz = operator_norm_estimate(meas) ** 2
    alpha, beta = cfg.twist_alpha, cfg.twist_beta
    tau = 0.5 * float(np.max(np.abs(meas.apply_adjoint(y))))
    tau_floor = tau * 1e-12

    x = np.zeros(meas.grid.shape)
    ax = np.zeros_like(y)
    dual = None
    best = ([], np.zeros(0), y_norm)
    history = []
    iterations = 0
    unchanged = 0
    termination = "max_iters"
    stage_best = []
    fits = None
    confirm = 0

    def objective(x_, ax_):
        return 0.5 * float(np.sum((ax_ - y) ** 2)) + tau * (
            total_variation(x_) + cfg.mu * float(np.abs(x_).sum())
        )

    while iterations < cfg.max_iters:
        x_prev = x
        f = objective(x, ax)
        stage = [f]
        restart = True
        for _ in range(cfg.stage_iters):
            if iterations >= cfg.max_iters:
                break
            iterations += 1
            z = x + meas.apply_adjoint(y - ax) / lipschitz
            v, dual = _tv_denoise(z, tau / lipschitz, cfg.tv_inner_iters, dual)
            shrunk = _soft(v, cfg.mu * tau / lipschitz)
            if restart:
                x_new = shrunk
            else:
                x_new = (1.0 - alpha) * x_prev + (alpha - beta) * x + beta * shrunk
            ax_new = meas.apply(x_new)
            f_new = objective(x_new, ax_new)
            if f_new > f and not restart:
                # monotone safeguard: fall back to the plain IST step
                x_new, ax_new = shrunk, meas.apply(shrunk)
                f_new = objective(x_new, ax_new)
            if f_new > f:
                x_new, ax_new, f_new = x, ax, f
            if not np.all(np.isfinite(x_new)):
                raise FloatingPointError(
                    f"non-finite iterate at iteration {iterations}; step size diverged"
                )
            change = float(np.max(np.abs(x_new - x)))
            # an all-zero iterate only means tau is still too large
            still = change < cfg.stall_tol and np.any(x_new)
            unchanged = unchanged + 1 if still else 0
            x_prev, x, ax, f = x, x_new, ax_new, f_new
            restart = False
            stage.append(f)
            if float(np.linalg.norm(ax - y)) < target:
                break
            if unchanged >= cfg.stall_iters:
                break
        history.append(tuple(stage))

        resid = float(np.linalg.norm(ax - y))
        if cfg.refine:
            support, coef, r_ref = _refine(meas, y, x, cfg, target)
            logger.debug(
                "stage tau=%.3g iter=%d twist_res=%.3g refined=%d atoms res=%.3g",
                tau, iterations, resid / y_norm, len(support), r_ref / y_norm,
            )
            if r_ref < target:
                # keep the sparsest fit seen over a few more stages
                if fits is None or len(support) < len(fits[0]):
                    fits = (support, coef, r_ref)
                    confirm = 0
                else:
                    confirm += 1
                if len(support) <= 1 or confirm >= cfg.confirm_stages:
                    best = fits
                    termination = "residual"
                    break
            elif r_ref < best[2]:
                best = (support, coef, r_ref)
        if resid < target and fits is not None:
            # the raw iterate is far denser than any refined fit
            best, termination = fits, "residual"
            break
        if resid < target or (not cfg.refine and resid < best[2]):
            support = [tuple(int(v) for v in idx) for idx in np.argwhere(x != 0)]
            coef = x[tuple(np.array(support).T)] if support else np.zeros(0)
            best = (support, coef, resid)
            if resid < target:
                termination = "residual"
                break
        if unchanged >= cfg.stall_iters:
            # a fixed point only ends the run once continuation is exhausted
            if tau <= tau_floor:
                termination = "stall"
                break
            unchanged = 0
        # noisy data: the best residual stops improving long before eta
        if best[2] < y_norm:
            stage_best.append(best[2])
        if len(stage_best) > cfg.plateau_stages and stage_best[-1] > (
            1.0 - cfg.plateau_tol
        ) * stage_best[-1 - cfg.plateau_stages]:
            termination = "stall"
            break
        if tau > tau_floor:
            tau *= cfg.continuation_factor

    if fits is not None and termination != "residual":
        best, termination = fits, "residual"
    converged = termination != "max_iters"
    if not converged:
        warnings.warn(
            f"solver hit max_iters={cfg.max_iters} with relative residual "
            f"{best[2] / y_norm:.3g} > eta={cfg.eta:g}",
            ConvergenceWarning,
            stacklevel=2,
        )
    support, coef, resid = best
    spectrum = _spectrum_from(
        meas,
        support,
        coef,
        cfg,
        residual_norm=resid,
        relative_residual=resid / y_norm,
        iterations=iterations,
        converged=converged,
        termination=termination,
        objective_history=tuple(history),
    )
    if cfg.debias and len(spectrum):
        spectrum = debias(spectrum, corr, meas, cfg)
    return spectrum


def debias(spectrum, corr, meas, cfg=None):
    """Least-squares refit of the amplitudes on the frozen support.

    A single numerical dependency is resolved by dropping its
    smallest-amplitude participant; larger deficiencies drop every column a
    pivoted QR places beyond the rank.  Dropped atoms are listed in
    ``dropped``.
    """
    cfg = cfg or SolverConfig()
    if len(spectrum) == 0:
        raise ValueError("cannot debias an empty spectrum")
    y = np.asarray(corr.values, dtype=float)
    y_norm = float(np.linalg.norm(y))
    support = [meas.grid.index_of(a.gamma, a.omega) for a in spectrum.atoms]
    amps = list(spectrum.amplitudes)
    dropped = list(spectrum.dropped)
    while True:
        cols = meas.columns(support)
        _, r, perm = linalg.qr(cols, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        rank = int(np.sum(diag > 1e-12 * diag[0]))
        if rank == len(support):
            break
        if rank == len(support) - 1:
            # one dependency: drop its smallest-amplitude participant
            null = np.zeros(len(support))
            null[perm[:rank]] = -linalg.solve_triangular(r[:rank, :rank], r[:rank, rank])
            null[perm[rank]] = 1.0
            members = np.flatnonzero(np.abs(null) > 1e-8 * np.max(np.abs(null)))
            dependent = [int(members[np.argmin(np.abs(np.asarray(amps)[members]))])]
        else:
            # the pivoted columns beyond the rank add nothing to the span
            dependent = sorted(perm[rank:], key=lambda k: abs(amps[k]))
        for k in dependent:
            i, j = support[k]
            dropped.append((float(meas.grid.gammas[i]), float(meas.grid.omegas[j])))
        gone = set(int(k) for k in dependent)
        support = [s_ for k, s_ in enumerate(support) if k not in gone]
        amps = [a for k, a in enumerate(amps) if k not in gone]
    coef, resid = _least_squares(cols, y)
    if resid > spectrum.residual_norm * (1 + 1e-9) + 1e-300:
        # keep the input amplitudes if the refit is no better
        level = logging.DEBUG if spectrum.relative_residual < cfg.debias_eta else logging.WARNING
        logger.log(level, "debias did not lower the residual; keeping solver amplitudes")
        return replace(spectrum, debias_applied=False)
    if resid >= cfg.debias_eta * y_norm:
        logger.info(
            "debias residual %.3g exceeds debias_eta=%g", resid / y_norm, cfg.debias_eta
        )
    out = _spectrum_from(
        meas,
        support,
        coef,
        cfg,
        residual_norm=resid,
        relative_residual=resid / y_norm if y_norm else 0.0,
        iterations=spectrum.iterations,
        debias_applied=True,
        converged=spectrum.converged,
        termination=spectrum.termination,
        dropped=tuple(dropped),
        objective_history=spectrum.objective_history,
    )
    return out
