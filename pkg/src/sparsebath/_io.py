"""CSV and JSON helpers shared by the command line front end."""

import hashlib
import json
from pathlib import Path

import numpy as np

from .baseline import TabulatedSpectralDensity
from .timeseries import CorrelationSeries


def write_columns(path, names, columns):
    """Write equal-length columns as CSV with a header row.

    Values use 17 significant digits so files round-trip exactly and
    identical inputs give byte-identical output.
    """
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(names) + "\n")
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")


def read_columns(path):
    """Read a headed numeric CSV into a dict of column arrays."""
    path = Path(path)
    with open(path) as fh:
        header = fh.readline()
        while header.startswith("#"):
            header = fh.readline()
        names = [h.strip() for h in header.strip().split(",")]
        data = np.loadtxt(fh, delimiter=",", comments="#", ndmin=2)
    if data.shape[1] != len(names):
        raise ValueError(f"{path}: header has {len(names)} columns, data {data.shape[1]}")
    return {n: data[:, i] for i, n in enumerate(names)}


def read_correlation(path):
    cols = read_columns(path)
    t, c = cols.get("t_fs"), cols.get("C_cm2")
    if t is None or c is None:
        raise ValueError(f"{path}: expected columns t_fs,C_cm2")
    if t.size < 2:
        raise ValueError(f"{path}: need at least two lags")
    dt = float(t[1] - t[0])
    if t[0] != 0 or not np.allclose(np.diff(t), dt, rtol=1e-9, atol=1e-12):
        raise ValueError(f"{path}: lag times must be uniform and start at zero")
    return CorrelationSeries(c, dt)


def read_correlation_stderr(path):
    """The ``stderr_cm2`` column of a correlation file, or None."""
    return read_columns(path).get("stderr_cm2")


def write_correlation(path, corr, stderr=None):
    if stderr is None:
        write_columns(path, ["t_fs", "C_cm2"], [corr.times, corr.values])
    else:
        write_columns(path, ["t_fs", "C_cm2", "stderr_cm2"], [corr.times, corr.values, stderr])


def read_spectral_density(path, temperature):
    cols = read_columns(path)
    if "omega_cm1" not in cols:
        raise ValueError(f"{path}: expected an omega_cm1 column")
    value_cols = [k for k in cols if k != "omega_cm1"]
    if not value_cols:
        raise ValueError(f"{path}: no spectral density column")
    return TabulatedSpectralDensity(cols["omega_cm1"], cols[value_cols[0]], temperature)


def write_json(path, data):
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def read_json(path):
    return json.loads(Path(path).read_text())


def file_sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()
