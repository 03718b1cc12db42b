"""Command-line front end.

Subcommands: sample, simulate, sweep, saturation, compare, fit, oracle.
Physics parameters live in a JSON configuration file; individual keys can
be overridden with repeated ``--set key=value`` flags (unknown keys are
rejected).  Exit codes: 0 success, 1 usage/config/IO error, 2 completed
with flagged (non-converged) fits.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .disorder import export_realizations_csv, sample_disorder, sample_ensemble
from .dynamics import FluorescenceTrace, ground_state, integrate
from .fitting import (ExperimentalDataset, FitDomainError,
                      fit_double_lorentzian, fit_exponential,
                      fit_lorentzian_single, fit_ple_saturation,
                      fit_stretched_composite)
from .oracle import MAX_ORACLE_IONS, TruncationError, quantum_oracle
from .params import ConfigError, ModelParams, apply_overrides, load_config
from .sweep import (WORKERS_ENV_VAR, compare_models, default_plan,
                    persist_run, plan_from_manifest, run_detuning_sweep,
                    run_point, run_saturation_curve, write_manifest)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FLAGGED = 2

LOCK_NAME = ".spincav.lock"

FIT_MODELS = ("exponential", "stretched", "lorentzian", "double_lorentzian", "ple")


class CliError(Exception):
    pass


def _load_params(args) -> ModelParams:
    if args.config:
        params = load_config(args.config)
    else:
        params = ModelParams()
    if getattr(args, "seed", None) is not None:
        params = params.replace(master_seed=args.seed)
    if args.set:
        params = apply_overrides(params, args.set)
    return params


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


class _RunLock:
    """One run per output directory, enforced by an exclusive lock file."""

    def __init__(self, directory: Path):
        self.path = directory / LOCK_NAME

    def __enter__(self):
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise CliError(f"output directory is locked by another run "
                           f"(remove {self.path} if stale)")
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise CliError(f"cannot parse float list {text!r}")


def cmd_sample(args) -> int:
    params = _load_params(args)
    out = _out_dir(args)
    realizations = sample_ensemble(params)
    path = out / "realizations.csv"
    export_realizations_csv(realizations, path)
    print(f"wrote {len(realizations)} realizations x {params.n_ions} ions "
          f"to {path}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    params = _load_params(args)
    out = _out_dir(args)
    flux = args.flux if args.flux is not None else params.phi
    detuning = args.detuning if args.detuning is not None else params.delta_c
    realizations = sample_ensemble(params)
    trace, fit = run_point(params, flux, detuning, args.model, realizations,
                           workers=args.threads)
    trace.export_csv(out / "trace.csv")
    fit.export_json(out / "fit.json")
    status = "ok" if fit.converged else f"flagged ({fit.message})"
    print(f"phi={flux:g} delta_c={detuning:g} model={args.model}: "
          f"gamma/kappa={fit['gamma']:.6g} [{status}]")
    return EXIT_OK if fit.converged else EXIT_FLAGGED


def _build_plan(args, params: ModelParams):
    fluxes = _parse_floats(args.fluxes)
    models = tuple(m.strip() for m in args.models.split(","))
    return default_plan(params, flux_list=fluxes,
                        n_detunings=args.n_detunings,
                        detuning_max=args.detuning_max, models=models)


def cmd_sweep(args) -> int:
    params = _load_params(args)
    if args.manifest:
        plan = plan_from_manifest(args.manifest)
    else:
        plan = _build_plan(args, params)
    n_points = len(plan.flux_list) * len(plan.detuning_grid) * len(plan.models)
    n_tasks = n_points * plan.base_params.n_traj
    if args.dry_run:
        print(f"plan {plan.run_id}: {len(plan.flux_list)} fluxes x "
              f"{len(plan.detuning_grid)} detunings x {len(plan.models)} "
              f"models = {n_points} points, {plan.base_params.n_traj} "
              f"realizations, {n_tasks} integration tasks")
        return EXIT_OK
    out = _out_dir(args)
    with _RunLock(out):
        write_manifest(plan, out, status="incomplete")
        result = run_detuning_sweep(plan, workers=args.threads, progress=print,
                                    trace_dir=out if args.traces else None)
        persist_run(result, out)
    flagged = sum(1 for r in result.records if not r["fit_ok"])
    print(f"sweep {plan.run_id} complete: {n_points} points, "
          f"{flagged} flagged; artifacts in {out}")
    return EXIT_FLAGGED if flagged else EXIT_OK


def cmd_saturation(args) -> int:
    params = _load_params(args).replace(delta_c=0.0)
    out = _out_dir(args)
    fluxes = _parse_floats(args.fluxes)
    rows, fit = run_saturation_curve(params, fluxes, workers=args.threads)
    with open(out / "saturation.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["flux", "integrated_fluorescence"])
        for r in rows:
            writer.writerow([repr(r["flux"]), repr(r["integrated_fluorescence"])])
    fit.export_json(out / "saturation_fit.json")
    print(f"phi_0 = {fit.extras['phi_0']:.6g} "
          f"({'converged' if fit.converged else 'flagged'})")
    return EXIT_OK if fit.converged else EXIT_FLAGGED


def cmd_compare(args) -> int:
    params = _load_params(args)
    plan = _build_plan(args, params)
    if set(plan.models) != {"full", "local"}:
        raise CliError("compare needs --models full,local")
    out = _out_dir(args)
    with _RunLock(out):
        write_manifest(plan, out, status="incomplete")
        sweep = run_detuning_sweep(plan, workers=args.threads, progress=print)
        compare_models(plan, workers=args.threads, phi_0=args.phi0,
                       sweep=sweep)
        persist_run(sweep, out)
    print(f"comparison tables written to {out}")
    flagged = sum(1 for r in sweep.records if not r["fit_ok"])
    return EXIT_FLAGGED if flagged else EXIT_OK


def cmd_fit(args) -> int:
    if args.model not in FIT_MODELS:
        raise CliError(f"unknown fit model {args.model!r}; "
                       f"valid models: {', '.join(FIT_MODELS)}")
    out = _out_dir(args)
    path = Path(args.input)
    if not path.exists():
        raise CliError(f"input file not found: {path}")
    if args.model == "exponential":
        trace = FluorescenceTrace.from_csv(path)
        window = (args.window_start if args.window_start is not None else trace.times[0],
                  args.window_end if args.window_end is not None else trace.times[-1])
        fit = fit_exponential(trace, window)
    elif args.model == "stretched":
        dataset = ExperimentalDataset.from_csv(path, gamma_0=args.gamma0)
        fit = fit_stretched_composite(dataset, poisson_weights=args.poisson)
    else:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            data = np.array([[float(a), float(b)] for a, b in reader])
        if args.model == "lorentzian":
            fit = fit_lorentzian_single(data[:, 0], data[:, 1])
        elif args.model == "double_lorentzian":
            fit = fit_double_lorentzian(data[:, 0], data[:, 1])
        else:
            fit = fit_ple_saturation(data[:, 0], data[:, 1])
    fit_path = out / "fit.json"
    fit.export_json(fit_path)
    print(f"{args.model} fit {'converged' if fit.converged else 'flagged'}; "
          f"wrote {fit_path}")
    return EXIT_OK if fit.converged else EXIT_FLAGGED


def cmd_oracle(args) -> int:
    params = _load_params(args)
    if params.n_ions > MAX_ORACLE_IONS:
        raise CliError(f"quantum oracle is limited to n_ions <= "
                       f"{MAX_ORACLE_IONS}; got n_ions = {params.n_ions}")
    out = _out_dir(args)
    realization = sample_disorder(params, 0)
    grid = np.linspace(0.0, params.t_pulse, args.n_samples)
    try:
        exact = quantum_oracle(params, realization, args.cutoff,
                               (0.0, params.t_pulse), grid)
    except TruncationError as exc:
        raise CliError(str(exc))
    mf = integrate(ground_state(params.n_ions), realization, params,
                   (0.0, params.t_pulse), drive_on=True, sample_grid=grid)
    a_scale = max(np.max(np.abs(exact.a)), 1e-300)
    header = ["time_over_kappa", "re_a_oracle", "im_a_oracle", "re_a_meanfield",
              "im_a_meanfield", "rel_dev_a"]
    n = params.n_ions
    for j in range(n):
        header += [f"sigma_z_{j}_oracle", f"sigma_z_{j}_meanfield",
                   f"rel_dev_sigma_z_{j}"]
    path = out / "oracle_comparison.csv"
    max_dev = 0.0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, t in enumerate(grid):
            dev_a = float(abs(exact.a[i] - mf.a[i]) / a_scale)
            row = [repr(float(t)), repr(float(exact.a[i].real)),
                   repr(float(exact.a[i].imag)), repr(float(mf.a[i].real)),
                   repr(float(mf.a[i].imag)), repr(dev_a)]
            max_dev = max(max_dev, dev_a)
            for j in range(n):
                dev_z = float(abs(exact.sigma_z[i, j] - mf.s_z[i, j]) / 2.0)
                row += [repr(float(exact.sigma_z[i, j])),
                        repr(float(mf.s_z[i, j])), repr(dev_z)]
                max_dev = max(max_dev, dev_z)
            writer.writerow(row)
    print(f"oracle comparison written to {path}; max relative deviation "
          f"{max_dev:.3e}; trace deviation {exact.trace_deviation:.2e}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spincav",
        description="Semiclassical cavity-spin-ensemble simulation and fitting")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a configuration key (repeatable)")
        p.add_argument("--threads", type=int, default=None,
                       help=f"worker threads (default: ${WORKERS_ENV_VAR} or CPU count)")
        if seed:
            p.add_argument("--seed", type=int, default=None,
                           help="override master_seed")
        p.add_argument("-v", "--verbose", action="store_true")

    p = sub.add_parser("sample", help="sample disorder realizations to CSV")
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("simulate", help="one pulse/decay point: trace + fit")
    common(p)
    p.add_argument("--flux", type=float, default=None)
    p.add_argument("--detuning", type=float, default=None)
    p.add_argument("--model", choices=("full", "local"), default="full")
    p.set_defaults(func=cmd_simulate)

    def sweep_opts(p):
        p.add_argument("--fluxes", default="0.01,0.25,16,64",
                       help="comma-separated flux list")
        p.add_argument("--n-detunings", type=int, default=21)
        p.add_argument("--detuning-max", type=float, default=3.0)

    p = sub.add_parser("sweep", help="flux x detuning sweep with fits")
    common(p)
    sweep_opts(p)
    p.add_argument("--models", default="full,local")
    p.add_argument("--manifest", help="re-run the plan stored in a manifest")
    p.add_argument("--dry-run", action="store_true",
                   help="print the plan and write nothing")
    p.add_argument("--traces", action="store_true",
                   help="dump per-point trace CSVs")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("saturation", help="resonant saturation curve + PLE fit")
    common(p)
    p.add_argument("--fluxes", default="0.01,0.04,0.25,1,4,16,64")
    p.set_defaults(func=cmd_saturation)

    p = sub.add_parser("compare", help="full-vs-local model comparison tables")
    common(p)
    sweep_opts(p)
    p.add_argument("--models", default="full,local")
    p.add_argument("--phi0", type=float, default=None,
                   help="critical flux (default: fit from saturation curve)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("fit", help="fit a CSV dataset with a named model")
    common(p, seed=False)
    p.add_argument("input", help="input CSV file")
    p.add_argument("model", help=f"one of: {', '.join(FIT_MODELS)}")
    p.add_argument("--gamma0", type=float, default=None,
                   help="bare reference rate for Purcell normalization")
    p.add_argument("--poisson", action="store_true",
                   help="Poisson-weight histogram counts")
    p.add_argument("--window-start", type=float, default=None)
    p.add_argument("--window-end", type=float, default=None)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("oracle", help="exact small-N quantum check vs mean field")
    common(p)
    p.add_argument("--cutoff", type=int, default=8, help="Fock-space cutoff")
    p.add_argument("--n-samples", type=int, default=201)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, ConfigError, FitDomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"IO error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
