"""Input validation helpers shared by the estimators and pipeline stages."""

import numbers

import numpy as np


class ParseError(ValueError):
    """Raised when an input file cannot be interpreted."""


class NonNumericRowError(ParseError):
    """A data row could not be converted to a number."""


class TooFewSamplesError(ParseError):
    """The input holds fewer samples than the operation needs."""


class DimensionError(ValueError):
    """Raised when array shapes do not agree."""


def check_1d_finite(values, name="values", min_length=1):
    """Return ``values`` as a finite float64 1-D array."""
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.ravel()
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be one-dimensional, got shape {arr.shape}")
    if arr.size < min_length:
        raise ValueError(f"{name} needs at least {min_length} entries, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_positive(value, name):
    if not isinstance(value, numbers.Real) or not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value!r}")
    return float(value)


def check_count(value, name, minimum=1):
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise ValueError(f"{name} must be >= {minimum}, got {value}")
    return int(value)


def check_increasing(values, name, allow_negative=False):
    arr = check_1d_finite(values, name)
    if np.any(np.diff(arr) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    if not allow_negative and arr[0] < 0:
        raise ValueError(f"{name} must be nonnegative")
    return arr


def check_square_symmetric(matrix, name="hamiltonian", rtol=1e-10):
    mat = np.asarray(matrix, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {mat.shape}")
    if not np.all(np.isfinite(mat)):
        raise ValueError(f"{name} contains non-finite entries")
    scale = max(np.max(np.abs(mat)), 1.0)
    if np.max(np.abs(mat - mat.T)) > rtol * scale:
        raise ValueError(f"{name} is not symmetric")
    return mat


def check_density_matrix(rho, n, tol=1e-10):
    """Validate a Hermitian, unit-trace, positive semidefinite ``n x n`` matrix."""
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (n, n):
        raise DimensionError(f"density matrix must have shape {(n, n)}, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValueError("density matrix is not Hermitian")
    if abs(np.trace(rho) - 1.0) > tol:
        raise ValueError("density matrix must have unit trace")
    if np.min(np.linalg.eigvalsh(rho)) < -tol:
        raise ValueError("density matrix is not positive semidefinite")
    return rho
