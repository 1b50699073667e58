"""Command line front end: ``sparsebath <subcommand> [options]``.

Every flag can also be set through an environment variable named
``SPARSEBATH_`` plus the flag's destination in upper case, for example
``SPARSEBATH_OUT_DIR`` or ``SPARSEBATH_DT_FS``.  Explicit flags win.

Exit status is 0 on success, 2 on usage errors and 1 on runtime errors.
A failed run removes any files it had already written.
"""

import argparse
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import _io
from .baseline import cosine_transform_sd, window
from .bathmodel import DrudeLorentzModel, evaluate_sd, reorganization_energy, tabulate_kernel
from .dictionary import AtomGrid, Measurement
from .dynamics import (
    ExcitonSystem,
    fmo_hamiltonian,
    load_hamiltonian,
    observables,
    propagate,
    site_state,
)
from .solver import Atom, SolverConfig, solve
from .synth import SynthSpec, synth_correlation, synth_gap_trajectory
from .timeseries import (
    GapTrajectory,
    autocorrelation,
    bartlett_standard_error,
    load_trajectory,
    truncate,
)

ENV_PREFIX = "SPARSEBATH_"

logger = logging.getLogger("sparsebath")

DEFAULT_ATOMS = "12:60:300,30:150:500,6:250:200,48:380:400,18:520:250"


class RunContext:
    """Tracks written files so a failed run can clean up after itself."""

    def __init__(self, out_dir):
        self.out_dir = Path(out_dir)
        self.outputs = []
        self.inputs = {}

    def path(self, name):
        p = self.out_dir / name
        self.outputs.append(p)
        return p

    def use_input(self, path):
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"input file not found: {path}")
        self.inputs[str(path)] = _io.file_sha256(path)
        return path

    def cleanup(self):
        for p in self.outputs:
            if p.exists():
                p.unlink()


def _parse_atoms(text):
    atoms = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        parts = item.split(":")
        if len(parts) != 3:
            raise ValueError(f"atom {item!r} is not gamma:omega:amplitude")
        atoms.append(Atom(*(float(p) for p in parts)))
    return tuple(atoms)


def _grid(args):
    return AtomGrid(
        np.arange(0.0, args.gamma_max + 1e-9, args.gamma_step),
        np.arange(0.0, args.omega_max + 1e-9, args.omega_step),
    )


def _freq_grid(args):
    return np.arange(0.0, args.freq_max + 1e-9, args.freq_step)


def _eta(text):
    if text == "auto":
        return text
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("eta must be positive or 'auto'")
    return value


def _solver_config(args, corr=None, stderr=None):
    eta = args.eta
    if eta == "auto":
        if stderr is None:
            raise ValueError("--eta auto needs a stderr_cm2 column in the correlation file")
        # discrepancy principle: stop once the fit is within the sampling error
        eta = float(np.linalg.norm(stderr[: corr.max_lag]) / np.linalg.norm(corr.values))
        logger.info("eta from the sampling error: %.4g", eta)
    debias_eta = args.debias_eta
    if args.debias and debias_eta >= eta:
        debias_eta = eta / 100.0
    return SolverConfig(
        mu=args.mu,
        eta=eta,
        debias=args.debias,
        debias_eta=debias_eta,
        max_iters=args.max_iters,
        stall_iters=args.stall_iters,
    )


def _in_dir(ctx, name):
    return name if os.path.dirname(str(name)) else ctx.out_dir / name


# -- subcommands ---------------------------------------------------------------


def cmd_synth(args, ctx):
    if args.spec:
        spec = SynthSpec.load(ctx.use_input(args.spec))
        if args.seed is not None:
            spec = SynthSpec(spec.atoms, spec.n_samples, spec.dt, spec.noise_sigma, args.seed)
    else:
        spec = SynthSpec(
            _parse_atoms(args.atoms),
            args.n_samples,
            args.dt_fs,
            args.noise_sigma,
            0 if args.seed is None else args.seed,
        )
    _io.write_json(ctx.path("synth_spec.json"), spec.to_dict())
    _io.write_correlation(ctx.path("target_correlation.csv"), synth_correlation(spec))
    if args.n_steps:
        traj = synth_gap_trajectory(spec, args.n_steps)
        t = np.arange(traj.n_samples) * traj.dt
        _io.write_columns(ctx.path("gaps.csv"), ["t_fs", "gap_cm1"], [t, traj.samples])


def _load_gaps(path, dt):
    cols = None
    try:
        cols = _io.read_columns(path)
    except ValueError:
        pass
    if cols is not None and "gap_cm1" in cols:
        t = cols.get("t_fs")
        if t is not None and t.size > 1:
            dt = float(t[1] - t[0])
        return GapTrajectory(cols["gap_cm1"], dt)
    return load_trajectory(path, dt)


def cmd_autocorr(args, ctx):
    traj = _load_gaps(ctx.use_input(_in_dir(ctx, args.input)), args.dt_fs)
    max_lag = args.max_lag if args.max_lag else min(traj.n_samples // 2, 2500)
    corr = autocorrelation(traj, max_lag=max_lag)
    stderr = bartlett_standard_error(corr, traj.n_samples)
    if args.keep_fraction < 1.0:
        corr = truncate(corr, args.keep_fraction)
    _io.write_correlation(ctx.path(args.output), corr, stderr[: corr.max_lag])


def cmd_fft(args, ctx):
    corr = _io.read_correlation(ctx.use_input(_in_dir(ctx, args.input)))
    if args.keep_fraction < 1.0:
        corr = truncate(corr, args.keep_fraction)
    sd = cosine_transform_sd(window(corr, args.window), args.temperature, _freq_grid(args))
    _io.write_columns(ctx.path(args.output), ["omega_cm1", "J_cm1"], [sd.frequencies, sd.values])


def _recover_one(path, args):
    corr = _io.read_correlation(path)
    stderr = _io.read_correlation_stderr(path)
    if args.keep_fraction < 1.0:
        corr = truncate(corr, args.keep_fraction)
    meas = Measurement.for_correlation(_grid(args), corr, dense=args.dense)
    return solve(corr, meas, _solver_config(args, corr, stderr))


def cmd_recover(args, ctx):
    inputs = [ctx.use_input(_in_dir(ctx, p)) for p in args.input]
    with ThreadPoolExecutor(max_workers=max(1, args.threads)) as pool:
        results = list(pool.map(lambda p: _recover_one(p, args), inputs))
    for path, spectrum in zip(inputs, results):
        name = args.output if len(inputs) == 1 else f"{path.stem}_atoms.json"
        _io.write_json(ctx.path(name), spectrum.to_dict())
        logger.info(
            "%s: %d atoms, relative residual %.3g (%s)",
            path.name, len(spectrum), spectrum.relative_residual, spectrum.termination,
        )


def _load_model(path, temperature, args):
    """Model from JSON; the file's own temperature wins over ``temperature``."""
    data = dict(_io.read_json(path))
    if data.get("temperature") is not None:
        temperature = None
    data["normalization"] = args.normalization
    data["omega_max"] = args.cutoff_cm1
    return DrudeLorentzModel.from_dict(data, temperature)


def cmd_model(args, ctx):
    model = _load_model(ctx.use_input(_in_dir(ctx, args.atoms)), args.temperature, args)
    data = model.to_dict()
    data["reorganization_energy_cm1"] = reorganization_energy(model)
    data["widened_atoms"] = [list(w) for w in model.widened]
    _io.write_json(ctx.path(args.output), data)
    freqs = _freq_grid(args)
    _io.write_columns(ctx.path("sd_model.csv"), ["omega_cm1", "J_cm1"],
                      [freqs, evaluate_sd(model, freqs)])


def cmd_kernel(args, ctx):
    model = _load_model(ctx.use_input(_in_dir(ctx, args.model)), None, args)
    kern = tabulate_kernel(model, args.t_max, args.dt_fs, args.temperature)
    _io.write_columns(ctx.path(args.output), ["t_fs", "re_D", "im_D"],
                      [kern.times, kern.values.real, kern.values.imag])


def _observable_columns(results):
    names, cols = [], []
    for key, series in results.items():
        kind, _, idx = key.partition(":")
        label = idx.replace(",", "_")
        if kind == "pop":
            names.append(f"pop_{label}")
            cols.append(series)
        else:
            names += [f"re_coh_{label}", f"im_coh_{label}"]
            cols += [series.real, series.imag]
    return names, cols


def cmd_propagate(args, ctx):
    if args.hamiltonian:
        h = load_hamiltonian(ctx.use_input(args.hamiltonian))
    else:
        h = fmo_hamiltonian()
    n = h.shape[0]
    if args.sd_table:
        paths = [ctx.use_input(_in_dir(ctx, p)) for p in args.sd_table]
        baths = [_io.read_spectral_density(p, args.temperature) for p in paths]
    else:
        paths = [ctx.use_input(_in_dir(ctx, p)) for p in args.model]
        baths = [_load_model(p, args.temperature, args) for p in paths]
    if len(baths) == 1:
        baths = baths * n
    if len(baths) != n:
        raise ValueError(f"need 1 or {n} bath files, got {len(baths)}")
    system = ExcitonSystem(h, tuple(baths), args.temperature)
    if args.rho0:
        rho0 = np.loadtxt(ctx.use_input(args.rho0), delimiter=",", comments="#",
                          dtype=complex, ndmin=2)
    else:
        rho0 = site_state(n, args.init_site - 1)
    traj = propagate(system, rho0, args.t_max, args.dt_fs)
    which = args.observables or [f"pop:{i + 1}" for i in range(n)]
    names, cols = _observable_columns(observables(traj, which, args.basis))
    _io.write_columns(ctx.path(args.output), ["time_fs"] + names, [traj.times] + cols)
    _io.write_json(ctx.path("propagate_diagnostics.json"), traj.diagnostics)


def cmd_compare(args, ctx):
    path = ctx.use_input(_in_dir(ctx, args.input))
    full = _io.read_correlation(path)
    short = truncate(full, args.keep_fraction)
    freqs = _freq_grid(args)
    sd_full = cosine_transform_sd(window(full, args.window), args.temperature, freqs)
    sd_short = cosine_transform_sd(window(short, args.window), args.temperature, freqs)
    meas = Measurement.for_correlation(_grid(args), short, dense=args.dense)
    spectrum = solve(short, meas, _solver_config(args, short, _io.read_correlation_stderr(path)))
    model = DrudeLorentzModel.from_spectrum(
        spectrum, args.temperature, normalization=args.normalization, omega_max=args.cutoff_cm1
    )
    _io.write_json(ctx.path("compare_atoms.json"), spectrum.to_dict())
    _io.write_columns(
        ctx.path(args.output),
        ["omega_cm1", "J_fft_full", "J_fft_truncated", "J_recovered"],
        [freqs, sd_full.values, sd_short.values, evaluate_sd(model, freqs)],
    )


# -- parser --------------------------------------------------------------------


def _common():
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--out-dir", default=".", help="directory for all outputs")
    g.add_argument("--seed", type=int, default=None, help="random seed (synth)")
    g.add_argument("--threads", type=int, default=1, help="worker and BLAS thread count")
    g.add_argument("--log-level", default="WARNING",
                   choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    return p


def _add_solver(p):
    p.add_argument("--mu", type=float, default=1.0, help="L1 weight relative to TV")
    p.add_argument(
        "--eta", type=_eta, default=1e-7,
        help="residual tolerance relative to ||C||_2, or 'auto' to use the "
        "sampling error recorded by autocorr",
    )
    p.add_argument("--debias", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--debias-eta", type=float, default=1e-9)
    p.add_argument("--max-iters", type=int, default=20000)
    p.add_argument("--stall-iters", type=int, default=100)
    p.add_argument("--dense", action="store_true", help="materialise the dictionary matrix")
    p.add_argument("--gamma-max", type=float, default=156.0)
    p.add_argument("--gamma-step", type=float, default=6.0)
    p.add_argument("--omega-max", type=float, default=2000.0)
    p.add_argument("--omega-step", type=float, default=2.0)


def _add_freqs(p):
    p.add_argument("--temperature", type=float, default=300.0, help="kelvin")
    p.add_argument("--freq-max", type=float, default=2000.0, help="cm^-1")
    p.add_argument("--freq-step", type=float, default=1.0, help="cm^-1")


def _add_model_opts(p):
    p.add_argument("--normalization", default="transform", choices=["transform", "printed"])
    p.add_argument("--cutoff-cm1", type=float, default=4000.0,
                   help="upper frequency limit of the kernel integral")


def build_parser():
    common = _common()
    parser = argparse.ArgumentParser(
        prog="sparsebath",
        description="Sparse Drude-Lorentz spectral densities and exciton dynamics.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="subcommand")

    p = sub.add_parser("synth", parents=[common], help="synthetic correlation and gaps")
    p.add_argument("--spec", help="JSON synth spec; overrides the atom flags")
    p.add_argument("--atoms", default=DEFAULT_ATOMS, help="gamma:omega:amplitude,...")
    p.add_argument("--n-samples", type=int, default=2500)
    p.add_argument("--dt-fs", type=float, default=4.0)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--n-steps", type=int, default=20000, help="gap samples (0 for none)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("autocorr", parents=[common], help="gap autocorrelation")
    p.add_argument("--input", default="gaps.csv")
    p.add_argument("--output", default="correlation.csv")
    p.add_argument("--dt-fs", type=float, default=4.0,
                   help="sample spacing when the input has no time column")
    p.add_argument("--max-lag", type=int, default=0, help="0 for min(N/2, 2500)")
    p.add_argument("--keep-fraction", type=float, default=1.0)
    p.set_defaults(func=cmd_autocorr)

    p = sub.add_parser("fft", parents=[common], help="cosine-transform spectral density")
    p.add_argument("--input", default="correlation.csv")
    p.add_argument("--output", default="sd_fft.csv")
    p.add_argument("--keep-fraction", type=float, default=1.0)
    p.add_argument("--window", default="none", help="none, hann or exponential:tau_fs")
    _add_freqs(p)
    p.set_defaults(func=cmd_fft)

    p = sub.add_parser("recover", parents=[common], help="sparse atom recovery")
    p.add_argument("--input", nargs="+", default=["correlation.csv"])
    p.add_argument("--output", default="atoms.json")
    p.add_argument("--keep-fraction", type=float, default=1.0)
    _add_solver(p)
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("model", parents=[common], help="closed-form spectral density")
    p.add_argument("--atoms", default="atoms.json")
    p.add_argument("--output", default="model.json")
    _add_freqs(p)
    _add_model_opts(p)
    p.set_defaults(func=cmd_model)

    p = sub.add_parser("kernel", parents=[common], help="bath kernel D(t)")
    p.add_argument("--model", default="model.json")
    p.add_argument("--output", default="kernel.csv")
    p.add_argument("--temperature", type=float, default=None,
                   help="kernel temperature; defaults to the model's")
    p.add_argument("--t-max", type=float, default=1000.0)
    p.add_argument("--dt-fs", type=float, default=1.0)
    _add_model_opts(p)
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("propagate", parents=[common], help="exciton dynamics")
    p.add_argument("--hamiltonian", help="N x N CSV in cm^-1; default: shipped FMO")
    p.add_argument("--model", nargs="+", default=["model.json"],
                   help="one model for all sites or one per site")
    p.add_argument("--sd-table", nargs="+", help="tabulated J CSV(s) instead of models")
    p.add_argument("--temperature", type=float, default=77.0)
    p.add_argument("--t-max", type=float, default=1000.0)
    p.add_argument("--dt-fs", type=float, default=1.0)
    p.add_argument("--init-site", type=int, default=1)
    p.add_argument("--rho0", help="CSV initial density matrix")
    p.add_argument("--observables", nargs="+", help="pop:i and coh:i,j selectors")
    p.add_argument("--basis", default="site", choices=["site", "exciton"])
    p.add_argument("--output", default="dynamics.csv")
    _add_model_opts(p)
    p.set_defaults(func=cmd_propagate)

    p = sub.add_parser("compare", parents=[common], help="FFT vs sparse recovery")
    p.add_argument("--input", default="correlation.csv")
    p.add_argument("--output", default="compare_sd.csv")
    p.add_argument("--keep-fraction", type=float, default=0.25)
    p.add_argument("--window", default="none")
    _add_freqs(p)
    _add_solver(p)
    _add_model_opts(p)
    p.set_defaults(func=cmd_compare)
    return parser


def _apply_env(parser):
    """Use SPARSEBATH_* variables as defaults for matching flags."""
    subparsers = [
        a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
    ]
    for sp in subparsers:
        for p in sp.choices.values():
            for action in p._actions:
                key = ENV_PREFIX + action.dest.upper()
                if action.dest == "help" or key not in os.environ:
                    continue
                raw = os.environ[key]
                if isinstance(action, argparse.BooleanOptionalAction) or isinstance(
                    action, argparse._StoreTrueAction
                ):
                    value = raw.strip().lower() in ("1", "true", "yes", "on")
                elif action.nargs in ("+", "*"):
                    value = raw.split()
                elif action.type is not None:
                    try:
                        value = action.type(raw)
                    except (ValueError, argparse.ArgumentTypeError):
                        p.error(f"invalid value {raw!r} in {key}")
                else:
                    value = raw
                p.set_defaults(**{action.dest: value})


def _manifest(args, ctx, status):
    params = {k: v for k, v in vars(args).items() if k != "func"}
    try:
        version = metadata.version("sparsebath")
    except metadata.PackageNotFoundError:
        version = "unknown"
    return {
        "subcommand": args.command,
        "status": status,
        "parameters": params,
        "inputs": ctx.inputs,
        "outputs": [str(p) for p in ctx.outputs],
        "version": version,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


def run(argv=None):
    """Run one subcommand and return its exit status."""
    parser = build_parser()
    try:
        _apply_env(parser)
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(levelname)s %(name)s: %(message)s",
    )
    if args.threads < 1:
        print("sparsebath: error: --threads must be at least 1", file=sys.stderr)
        return 2
    out_dir = Path(args.out_dir)
    ctx = RunContext(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        with threadpool_limits(limits=args.threads):
            args.func(args, ctx)
        manifest = _manifest(args, ctx, "ok")
        _io.write_json(ctx.path(f"manifest_{args.command}.json"), manifest)
    except Exception as exc:
        ctx.cleanup()
        logger.debug("run failed", exc_info=True)
        message = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"sparsebath {args.command}: error: {message}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
