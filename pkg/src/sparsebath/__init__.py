"""Sparse Drude-Lorentz spectral densities from short energy-gap trajectories."""

from .baseline import TabulatedSpectralDensity, cosine_transform_sd, window
from .bathmodel import (
    BathKernel,
    DrudeLorentzModel,
    bath_kernel,
    evaluate_sd,
    reorganization_energy,
    tabulate_kernel,
)
from .dictionary import AtomGrid, Measurement, default_grid
from .dynamics import DensityTrajectory, ExcitonSystem, observables, propagate
from .solver import Atom, SolverConfig, SparseSpectrum, debias, solve
from .synth import SynthSpec, synth_correlation, synth_gap_trajectory
from .timeseries import CorrelationSeries, GapTrajectory, autocorrelation, load_trajectory

__all__ = [
    "Atom",
    "AtomGrid",
    "BathKernel",
    "CorrelationSeries",
    "DensityTrajectory",
    "DrudeLorentzModel",
    "ExcitonSystem",
    "GapTrajectory",
    "Measurement",
    "SolverConfig",
    "SparseSpectrum",
    "SynthSpec",
    "TabulatedSpectralDensity",
    "autocorrelation",
    "bath_kernel",
    "cosine_transform_sd",
    "debias",
    "default_grid",
    "evaluate_sd",
    "load_trajectory",
    "observables",
    "propagate",
    "reorganization_energy",
    "solve",
    "synth_correlation",
    "synth_gap_trajectory",
    "tabulate_kernel",
    "window",
]
__version__ = "0.1.0"
