import json

import numpy as np
import pytest

from sparsebath.dictionary import AtomGrid, Measurement, default_grid
from sparsebath.solver import Atom, SolverConfig, solve
from sparsebath.synth import (
    SynthSpec,
    make_rng,
    synth_correlation,
    synth_gap_trajectory,
    target_correlation,
)
from sparsebath.timeseries import autocorrelation, bartlett_standard_error

from conftest import damped_cosines


def test_no_atoms_gives_zero_series():
    corr = synth_correlation(SynthSpec((), 64, 4.0))
    assert corr.values.shape == (64,)
    assert np.all(corr.values == 0)


def test_static_atom_gives_constant():
    corr = synth_correlation(SynthSpec([(0.0, 0.0, 1.0)], 32, 4.0))
    assert np.all(corr.values == 1.0)


def test_two_atoms_match_per_atom_sum():
    atoms = [(12.0, 60.0, 3.0), (30.0, 150.0, 5.0)]
    spec = SynthSpec(atoms, 500, 4.0, rng_seed=7)
    t = np.arange(500) * 4.0
    ref = damped_cosines(atoms, t)
    assert np.max(np.abs(synth_correlation(spec).values - ref)) <= 1e-15 * 8.0


def test_noise_reproducible_and_scaled():
    spec = SynthSpec([(30.0, 200.0, 2.0)], 20000, 4.0, noise_sigma=0.05, rng_seed=3)
    a = synth_correlation(spec).values
    b = synth_correlation(spec).values
    assert np.array_equal(a, b)
    resid = a - target_correlation(spec.atoms, np.arange(20000) * 4.0)
    assert np.std(resid[1:]) == pytest.approx(0.05 * 2.0, rel=0.03)
    other = synth_correlation(SynthSpec(spec.atoms, 20000, 4.0, 0.05, rng_seed=4)).values
    assert not np.array_equal(a, other)


def test_philox_stream_is_pinned():
    # guards against a silent generator change
    first = make_rng(0).standard_normal(3)
    assert np.array_equal(first, np.random.Generator(np.random.Philox(0)).standard_normal(3))


def test_spec_validation():
    with pytest.raises(ValueError):
        SynthSpec([(-1.0, 10.0, 1.0)], 10, 4.0)
    with pytest.raises(ValueError):
        SynthSpec([], 0, 4.0)
    with pytest.raises(ValueError):
        SynthSpec([], 10, 0.0)
    with pytest.raises(ValueError):
        SynthSpec([], 10, 4.0, noise_sigma=-0.1)


def test_off_grid_flags():
    spec = SynthSpec([(6.0, 100.0, 1.0), (7.0, 100.0, 1.0), (6.0, 101.0, 1.0)], 10, 4.0)
    assert spec.off_grid(default_grid()) == (False, True, True)


def test_spec_dict_round_trip(tmp_path):
    spec = SynthSpec([(6.0, 100.0, 1.5)], 10, 2.0, noise_sigma=0.01, rng_seed=9)
    assert SynthSpec.from_dict(spec.to_dict()) == spec
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(spec.to_dict()))
    assert SynthSpec.load(path) == spec
    assert isinstance(spec.atoms[0], Atom)


# -- gap trajectories ---------------------------------------------------------


def test_zero_atom_trajectory_is_constant():
    traj = synth_gap_trajectory(SynthSpec((), 10, 4.0), 100, mean=12000.0)
    assert np.all(traj.samples == 12000.0)


def test_trajectory_reproducible():
    spec = SynthSpec([(30.0, 200.0, 100.0)], 10, 4.0, rng_seed=11)
    a = synth_gap_trajectory(spec, 5000).samples
    b = synth_gap_trajectory(spec, 5000).samples
    assert np.array_equal(a, b)


def test_trajectory_variance_matches_c0():
    spec = SynthSpec([(30.0, 200.0, 100.0), (12.0, 60.0, 50.0)], 10, 4.0, rng_seed=5)
    x = synth_gap_trajectory(spec, 200_000).samples
    assert np.var(x) == pytest.approx(150.0, rel=0.05)


def test_trajectory_white_noise_variance():
    spec = SynthSpec([(30.0, 200.0, 100.0)], 10, 4.0, noise_sigma=0.2, rng_seed=5)
    x = synth_gap_trajectory(spec, 200_000)
    corr = autocorrelation(x, 10)
    # white noise of variance 0.2 * C0 adds only to the zero lag
    assert corr.values[0] == pytest.approx(120.0, rel=0.05)


@pytest.mark.slow
def test_long_trajectory_autocorrelation_converges():
    atoms = [(30.0, 200.0, 100.0)]
    spec = SynthSpec(atoms, 10, 4.0, rng_seed=1)
    corr = autocorrelation(synth_gap_trajectory(spec, 1_000_000), 101)
    target = damped_cosines(atoms, corr.times)
    # within 5% of C(0) at every lag up to 100
    assert np.max(np.abs(corr.values - target)) <= 0.05 * 100.0


@pytest.mark.slow
def test_trajectory_to_recovery_property():
    atoms = [(12.0, 100.0, 1.0), (24.0, 250.0, 1.0), (18.0, 400.0, 1.0)]
    grid = AtomGrid(np.arange(0.0, 60.0 + 1e-9, 6.0), np.arange(0.0, 600.0 + 1e-9, 2.0))
    n_lags, n_steps = 2500, 100_000
    meas = Measurement(grid, np.arange(n_lags) * 4.0)
    hits = 0
    for seed in range(20):
        traj = synth_gap_trajectory(SynthSpec(atoms, n_lags, 4.0, rng_seed=seed), n_steps)
        corr = autocorrelation(traj, n_lags)
        # tolerance from the sampling error of the estimate itself
        eta = np.linalg.norm(bartlett_standard_error(corr, n_steps)) / np.linalg.norm(corr.values)
        sp = solve(corr, meas, SolverConfig(eta=eta, debias_eta=eta / 100))
        hits += len(sp) > 0 and all(np.min(np.abs(sp.omegas - w)) <= 2.0 for _, w, _ in atoms)
    assert hits >= 18
