"""Energy-gap trajectories and their unbiased autocorrelation."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import fft as sp_fft
from scipy import signal

from ._validation import (
    NonNumericRowError,
    TooFewSamplesError,
    check_1d_finite,
    check_count,
    check_positive,
)


@dataclass(frozen=True)
class GapTrajectory:
    """Uniformly sampled energy gaps (cm^-1) with sampling interval ``dt`` (fs)."""

    samples: np.ndarray
    dt: float
    site_label: str = ""

    def __post_init__(self):
        samples = check_1d_finite(self.samples, "samples", min_length=2)
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "dt", check_positive(self.dt, "dt"))

    @property
    def n_samples(self):
        return self.samples.size

    @property
    def duration(self):
        """Total sampled time in fs."""
        return self.n_samples * self.dt


@dataclass(frozen=True)
class CorrelationSeries:
    """Lag-indexed correlation values C_k (cm^-2) at lag spacing ``dt`` (fs)."""

    values: np.ndarray
    dt: float

    def __post_init__(self):
        values = check_1d_finite(self.values, "values")
        if values[0] < 0:
            raise ValueError("zero-lag correlation must be nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dt", check_positive(self.dt, "dt"))

    @property
    def max_lag(self):
        return self.values.size

    @property
    def times(self):
        return np.arange(self.max_lag) * self.dt


def load_trajectory(path, dt, site_label=None):
    """Read a one-column CSV of energy gaps.

    Lines starting with ``#`` are comments.  A single non-numeric first
    line is accepted as a header.  Only the first comma-separated field
    of each row is read.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such trajectory file: {path}")
    values = []
    header_allowed = True
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        field = line.split(",")[0].strip()
        try:
            values.append(float(field))
        except ValueError:
            if header_allowed:
                header_allowed = False
                continue
            raise NonNumericRowError(f"{path}:{lineno}: non-numeric value {field!r}") from None
        header_allowed = False
    if len(values) < 2:
        raise TooFewSamplesError(f"{path}: need at least 2 samples, found {len(values)}")
    return GapTrajectory(np.array(values), dt, site_label or path.stem)


def autocorrelation(traj, max_lag=None, method="auto"):
    """Unbiased autocorrelation of the mean-subtracted gap series.

    C_k = 1/(N-k) * sum_{i<N-k} (x_i - xbar)(x_{i+k} - xbar), with xbar the
    mean over all N samples, for k = 0 .. max_lag-1.

    Parameters
    ----------
    traj : GapTrajectory
    max_lag : int, optional
        Number of lags kept, ``1 <= max_lag < N``.  Defaults to ``N // 2``.
    method : {"auto", "direct", "fft"}
        ``direct`` is the plain lag-by-lag sum.  ``fft`` computes the same
        lagged products by zero-padded convolution.

    Returns
    -------
    CorrelationSeries
    """
    n = traj.n_samples
    if max_lag is None:
        max_lag = n // 2
    max_lag = check_count(max_lag, "max_lag")
    if max_lag >= n:
        raise ValueError(f"max_lag must be < number of samples ({n}), got {max_lag}")
    x = traj.samples - traj.samples.mean()
    if method == "auto":
        method = "fft" if n * max_lag > 4_000_000 else "direct"
    if method == "direct":
        sums = np.array([np.dot(x[: n - k], x[k:]) for k in range(max_lag)])
    elif method == "fft":
        size = sp_fft.next_fast_len(2 * n - 1, real=True)
        spec = sp_fft.rfft(x, size)
        sums = sp_fft.irfft(spec * spec.conj(), size)[:max_lag]
    else:
        raise ValueError(f"unknown method {method!r}")
    values = sums / (n - np.arange(max_lag))
    # tiny negative zero-lag values from roundoff on constant input
    values[0] = max(values[0], 0.0)
    return CorrelationSeries(values, traj.dt)


def bartlett_standard_error(corr, n_samples):
    """Large-sample standard error of each lag of an autocovariance estimate.

    Bartlett's formula var(C_k) ~ (1/N) sum_m [C_m^2 + C_{m+k} C_{m-k}],
    with the sum running over the available lags of ``corr`` and the
    estimate plugged in for the true correlation.
    """
    n_samples = check_count(n_samples, "n_samples", 2)
    c = np.asarray(corr.values, dtype=float)
    k = c.size
    sym = np.concatenate([c[:0:-1], c])
    cross = signal.fftconvolve(sym, sym)
    lag = np.arange(k)
    var = (np.sum(sym**2) + cross[2 * lag + 2 * (k - 1)]) / n_samples
    return np.sqrt(np.clip(var, 0.0, None))


def truncate(corr, keep_fraction):
    """Keep the first ``floor(keep_fraction * max_lag)`` lags."""
    keep_fraction = float(keep_fraction)
    if not 0 < keep_fraction <= 1:
        raise ValueError(f"keep_fraction must lie in (0, 1], got {keep_fraction}")
    keep = int(np.floor(keep_fraction * corr.max_lag))
    if keep < 1:
        raise ValueError("truncation leaves no lags")
    return CorrelationSeries(corr.values[:keep], corr.dt)
