import logging

import numpy as np
import pytest

from sparsebath._validation import DimensionError
from sparsebath.dictionary import AtomGrid, Measurement
from sparsebath.solver import (
    Atom,
    SolverConfig,
    SparseSpectrum,
    debias,
    solve,
    total_variation,
    tv_l1_prox,
)
from sparsebath.timeseries import CorrelationSeries

from conftest import damped_cosines

# reduced grid used by the randomized properties; same spacing as the default
PROPERTY_GRID = AtomGrid(np.arange(0.0, 60.0 + 1e-9, 6.0), np.arange(0.0, 600.0 + 1e-9, 2.0))
PROPERTY_TIMES = np.arange(2500) * 4.0


def _series(atoms, n=2500, dt=4.0):
    t = np.arange(n) * dt
    return CorrelationSeries(damped_cosines(atoms, t), dt)


def _nearest_miss(recovered, atoms):
    return max(np.min(np.abs(recovered - w)) for _, w, _ in atoms)


# -- config --------------------------------------------------------------------


@pytest.mark.parametrize(
    "kwargs",
    [
        {"eta": 0.0},
        {"eta": -1.0},
        {"eta": 1e-7, "debias_eta": 1e-6},
        {"mu": -1.0},
        {"twist_rho": 1.0},
        {"continuation_factor": 1.0},
        {"max_iters": 0},
        {"plateau_tol": 1.0},
    ],
)
def test_config_rejects(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_config_debias_eta_free_without_debias():
    SolverConfig(eta=1e-7, debias_eta=1e-3, debias=False)


def test_twist_weights_in_range():
    cfg = SolverConfig()
    assert 0 < cfg.twist_alpha < 2
    assert 0 < cfg.twist_beta < 2 * cfg.twist_alpha


def test_spectrum_rejects_duplicate_atoms():
    with pytest.raises(ValueError):
        SparseSpectrum((Atom(6.0, 10.0, 1.0), Atom(6.0, 10.0, 2.0)), 0.0, 0.0, 0)


# -- prox ----------------------------------------------------------------------


def test_prox_zero_weights_is_identity(rng):
    v = rng.normal(size=(5, 7))
    assert np.array_equal(tv_l1_prox(v, 0.0, 0.0), v)


def test_prox_soft_threshold(rng):
    v = rng.normal(size=(4, 6))
    tau = 0.3
    expected = np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)
    assert np.allclose(tv_l1_prox(v, 0.0, tau), expected, atol=0)


def test_prox_keeps_constants():
    v = np.full((6, 9), 2.5)
    assert np.allclose(tv_l1_prox(v, 3.0, 0.0, inner_iters=50), v, atol=1e-12)


def test_prox_rejects_negative_weight():
    with pytest.raises(ValueError):
        tv_l1_prox(np.zeros((2, 2)), -1.0, 0.0)


def test_prox_lowers_tv(rng):
    v = rng.normal(size=(8, 12))
    out = tv_l1_prox(v, 0.5, 0.0, inner_iters=100)
    assert total_variation(out) < total_variation(v)
    # TV denoising preserves the mean (replicate boundary)
    assert out.mean() == pytest.approx(v.mean(), abs=1e-10)


def test_prox_1d_step_oracle():
    # two-level step, TV weight w: the jump shrinks by 2w / n on each side
    v = np.zeros((1, 10))
    v[0, 5:] = 1.0
    w = 0.5
    out = tv_l1_prox(v, w, 0.0, inner_iters=2000)
    assert np.allclose(out[0, :5], w / 5, atol=1e-6)
    assert np.allclose(out[0, 5:], 1 - w / 5, atol=1e-6)


# -- solve ---------------------------------------------------------------------


def test_zero_data_gives_empty_spectrum(small_grid):
    t = np.arange(100) * 4.0
    sp = solve(CorrelationSeries(np.zeros(100), 4.0), Measurement(small_grid, t))
    assert len(sp) == 0
    assert sp.residual_norm == 0.0


def test_length_mismatch(small_grid):
    meas = Measurement(small_grid, np.arange(100) * 4.0)
    with pytest.raises(DimensionError):
        solve(CorrelationSeries(np.ones(50), 4.0), meas)


def test_time_mismatch(small_grid):
    meas = Measurement(small_grid, np.arange(100) * 2.0)
    with pytest.raises(DimensionError):
        solve(CorrelationSeries(np.ones(100), 4.0), meas)


def test_single_atom_recovery(small_grid):
    corr = _series([(30.0, 200.0, 1.0)])
    meas = Measurement(small_grid, corr.times)
    sp = solve(corr, meas)
    assert (30.0, 200.0) in {(a.gamma, a.omega) for a in sp.atoms}
    assert sp.termination == "residual"
    assert sp.debias_applied
    assert sp.relative_residual < 1e-7
    amp = {(a.gamma, a.omega): a.amplitude for a in sp.atoms}[(30.0, 200.0)]
    assert amp == pytest.approx(1.0, rel=1e-2)


def test_objective_monotone_within_stages(small_grid):
    corr = _series([(12.0, 100.0, 1.0), (36.0, 300.0, 0.5)])
    sp = solve(corr, Measurement(small_grid, corr.times), SolverConfig(debias=False))
    assert sp.objective_history
    for stage in sp.objective_history:
        assert np.all(np.diff(stage) <= 1e-12 * max(abs(stage[0]), 1.0))


def test_deterministic(small_grid):
    corr = _series([(18.0, 150.0, 2.0), (6.0, 320.0, 1.0)])
    meas = Measurement(small_grid, corr.times)
    a = solve(corr, meas)
    b = solve(corr, meas)
    assert a.atoms == b.atoms
    assert a.residual_norm == b.residual_norm


def test_max_iters_warns(small_grid, rng):
    corr = _series([(18.0, 150.0, 2.0), (6.0, 320.0, 1.0)])
    # noise puts eta = 1e-7 out of reach
    corr = CorrelationSeries(corr.values + 0.01 * rng.normal(size=corr.values.size), 4.0)
    meas = Measurement(small_grid, corr.times)
    with pytest.warns(UserWarning, match="max_iters"):
        sp = solve(corr, meas, SolverConfig(max_iters=3, debias=False))
    assert not sp.converged
    assert sp.iterations == 3


def test_non_finite_data_rejected():
    with pytest.raises(ValueError):
        CorrelationSeries(np.array([1.0, np.nan, 0.0]), 4.0)


def test_amplitudes_above_floor(small_grid):
    corr = _series([(24.0, 250.0, 1.0)])
    sp = solve(corr, Measurement(small_grid, corr.times))
    assert np.all(np.abs(sp.amplitudes) > 1e-12)


# -- debias --------------------------------------------------------------------


def test_debias_exact_support(small_grid):
    atoms = [(12.0, 60.0, 3.0), (30.0, 150.0, 5.0), (48.0, 380.0, 4.0)]
    corr = _series(atoms)
    meas = Measurement(small_grid, corr.times)
    rough = SparseSpectrum(
        tuple(Atom(g, w, 1.0) for g, w, _ in atoms),
        residual_norm=np.inf,
        relative_residual=np.inf,
        iterations=0,
    )
    out = debias(rough, corr, meas)
    assert out.debias_applied
    for a, (_, _, amp) in zip(out.atoms, atoms):
        assert a.amplitude == pytest.approx(amp, rel=1e-6)
    assert out.relative_residual < 1e-9


def test_debias_never_raises_residual_or_adds_atoms(small_grid, rng):
    corr = _series([(12.0, 60.0, 3.0), (30.0, 150.0, 5.0)])
    corr = CorrelationSeries(corr.values + 0.01 * rng.normal(size=corr.values.size), 4.0)
    meas = Measurement(small_grid, corr.times)
    sp = solve(corr, meas, SolverConfig(eta=0.05, debias=False))
    out = debias(sp, corr, meas, SolverConfig(eta=0.05, debias_eta=1e-3))
    assert out.residual_norm <= sp.residual_norm * (1 + 1e-12)
    assert {(a.gamma, a.omega) for a in out.atoms} <= {(a.gamma, a.omega) for a in sp.atoms}


def test_debias_empty_support_errors(small_grid):
    corr = _series([(12.0, 60.0, 1.0)], n=50)
    meas = Measurement(small_grid, corr.times)
    with pytest.raises(ValueError):
        debias(SparseSpectrum((), 0.0, 0.0, 0), corr, meas)


def test_debias_drops_dependent_atom():
    # gamma = 0, omega = 0 and gamma = 0, omega = 500 cm^-1 at dt chosen so
    # the 500 cm^-1 cosine aliases to a constant: the columns coincide
    dt = 1.0 / (500.0 * 2.99792458e-5)
    grid = AtomGrid(np.array([0.0]), np.array([0.0, 500.0]))
    t = np.arange(20) * dt
    meas = Measurement(grid, t)
    corr = CorrelationSeries(np.full(20, 2.0), dt)
    sp = SparseSpectrum((Atom(0.0, 0.0, 1.5), Atom(0.0, 500.0, 0.5)), np.inf, np.inf, 0)
    out = debias(sp, corr, meas)
    assert len(out) == 1
    assert out.dropped == ((0.0, 500.0),)
    assert out.amplitudes[0] == pytest.approx(2.0, rel=1e-10)


def test_debias_logs_when_tolerance_missed(small_grid, rng, caplog):
    corr = _series([(12.0, 60.0, 1.0)])
    noisy = CorrelationSeries(corr.values + 0.05 * rng.normal(size=corr.values.size), 4.0)
    meas = Measurement(small_grid, noisy.times)
    sp = SparseSpectrum((Atom(12.0, 60.0, 1.0),), np.inf, np.inf, 0)
    with caplog.at_level(logging.INFO, logger="sparsebath.solver"):
        debias(sp, noisy, meas)
    assert "debias_eta" in caplog.text


# -- randomized recovery properties -------------------------------------------


def _draw_separated(rng, grid):
    """K <= 8 on-grid atoms whose neighbours are at least max(20, g_a + g_b) apart."""
    k = int(rng.integers(1, 9))
    while True:
        omegas = np.sort(rng.choice(grid.omegas, k, replace=False))
        gammas = rng.choice(grid.gammas, k)
        gaps = np.diff(omegas)
        if k == 1 or np.all(gaps >= np.maximum(20.0, gammas[1:] + gammas[:-1])):
            break
    amps = rng.uniform(0.5, 2.0, k)
    return list(zip(gammas, omegas, amps))


@pytest.mark.slow
def test_noiseless_recovery_property():
    meas = Measurement(PROPERTY_GRID, PROPERTY_TIMES)
    failures = []
    for draw in range(50):
        atoms = _draw_separated(np.random.default_rng(1000 + draw), PROPERTY_GRID)
        corr = CorrelationSeries(damped_cosines(atoms, PROPERTY_TIMES), 4.0)
        sp = solve(corr, meas)
        if len(sp) == 0 or _nearest_miss(sp.omegas, atoms) > 2.0:
            failures.append(draw)
    assert failures == []


CRITERION_ATOMS = [
    (12.0, 60.0, 300.0),
    (30.0, 150.0, 500.0),
    (6.0, 250.0, 200.0),
    (48.0, 380.0, 400.0),
    (18.0, 520.0, 250.0),
]


@pytest.mark.slow
def test_noise_robustness_property():
    meas = Measurement(PROPERTY_GRID, PROPERTY_TIMES)
    clean = damped_cosines(CRITERION_ATOMS, PROPERTY_TIMES)
    sigma = 0.01 * clean[0]
    hits = 0
    for draw in range(50):
        rng = np.random.default_rng(2000 + draw)
        y = clean + sigma * rng.normal(size=clean.size)
        # discrepancy principle: expected noise norm times a 1.1 safety factor,
        # so the true support itself meets the tolerance
        eta = 1.1 * sigma * np.sqrt(y.size) / np.linalg.norm(y)
        cfg = SolverConfig(eta=eta, debias_eta=eta / 100)
        sp = solve(CorrelationSeries(y, 4.0), meas, cfg)
        hits += len(sp) > 0 and _nearest_miss(sp.omegas, CRITERION_ATOMS) <= 2.0
    assert hits >= 45


def test_debias_drops_smallest_participant():
    # three identical columns carry one another; the smallest amplitude goes
    dt = 1.0 / (500.0 * 2.99792458e-5)
    grid = AtomGrid(np.array([0.0]), np.array([0.0, 250.0, 500.0, 1000.0]))
    t = np.arange(20) * dt
    meas = Measurement(grid, t)
    corr = CorrelationSeries(np.full(20, 2.0) + np.cos(250 * 2 * np.pi * 2.99792458e-5 * t), dt)
    sp = SparseSpectrum(
        (Atom(0.0, 0.0, 1.0), Atom(0.0, 500.0, 0.1), Atom(0.0, 250.0, 1.0)), np.inf, np.inf, 0
    )
    out = debias(sp, corr, meas)
    assert out.dropped == ((0.0, 500.0),)
    assert out.relative_residual < 1e-12
