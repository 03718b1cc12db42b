"""Experiment-analogue pipelines: detuning sweeps, saturation curves, and
full-vs-local model comparison, with deterministic parallel disorder
averaging and persisted run artifacts.

The unit of parallelism is the disorder realization; averages are reduced
in fixed realization order, so persisted results are bit-identical for any
worker count.  The same realization set is reused across every
(flux, detuning) point of a sweep, which both reduces variance across the
grid and makes a run exactly reproducible from its manifest.
"""
from __future__ import annotations

import csv
import json
import os
import time as _time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .analytics import SurvivalHistogram, bin_survival
from .disorder import DisorderRealization, sample_ensemble
from .dynamics import (FluorescenceTrace, Trajectory, decay_sample_grid,
                       run_decay, run_pulse, trajectory_flux)
from .fitting import (FitDomainError, FitResult, fit_double_lorentzian,
                      fit_exponential, fit_lorentzian_single,
                      fit_ple_saturation)
from .params import ModelParams

WORKERS_ENV_VAR = "SPINCAV_WORKERS"

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["run_id", "status", "code_version", "params", "plan", "seeds"],
    "properties": {
        "run_id": {"type": "string"},
        "status": {"enum": ["complete", "incomplete"]},
        "code_version": {"type": "string"},
        "wall_time_s": {"type": "number"},
        "params": {"type": "object"},
        "plan": {
            "type": "object",
            "required": ["flux_list", "detuning_grid", "models"],
            "properties": {
                "flux_list": {"type": "array", "items": {"type": "number"}},
                "detuning_grid": {"type": "array", "items": {"type": "number"}},
                "models": {"type": "array", "items": {"enum": ["full", "local"]}},
            },
        },
        "seeds": {
            "type": "object",
            "required": ["master_seed", "realization_seeds"],
        },
    },
}


def worker_count(requested: int | None = None) -> int:
    if requested is not None and requested > 0:
        return requested
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


@dataclass(frozen=True)
class SweepPlan:
    """A flux x detuning grid evaluated for one or both decay models."""

    base_params: ModelParams
    flux_list: tuple[float, ...]
    detuning_grid: tuple[float, ...]
    models: tuple[str, ...] = ("full", "local")
    run_id: str = field(default_factory=lambda: uuid.uuid4().hex[:12])

    def __post_init__(self):
        if len(self.flux_list) == 0:
            raise ValueError("flux_list must be non-empty")
        if any(f <= 0 for f in self.flux_list):
            raise ValueError("fluxes must be positive")
        if any(b <= a for a, b in zip(self.flux_list, self.flux_list[1:])):
            raise ValueError("flux_list must be strictly increasing")
        if any(b <= a for a, b in zip(self.detuning_grid, self.detuning_grid[1:])):
            raise ValueError("detuning_grid must be strictly increasing")
        bad = set(self.models) - {"full", "local"}
        if bad:
            raise ValueError(f"unknown models: {sorted(bad)}")


def default_plan(params: ModelParams,
                 flux_list: Sequence[float] = (0.01, 0.25, 16.0, 64.0),
                 n_detunings: int = 21, detuning_max: float = 3.0,
                 models: Sequence[str] = ("full", "local"),
                 run_id: str | None = None) -> SweepPlan:
    """Symmetric detuning grid bracketing the low-flux, crossover, and
    double-peak regimes."""
    grid = tuple(np.linspace(-detuning_max, detuning_max, n_detunings))
    kwargs = {} if run_id is None else {"run_id": run_id}
    return SweepPlan(base_params=params, flux_list=tuple(flux_list),
                     detuning_grid=grid, models=tuple(models), **kwargs)


def point_traces(params: ModelParams,
                 realizations: Sequence[DisorderRealization],
                 models: Sequence[str] = ("full",),
                 sample_grid: np.ndarray | None = None,
                 workers: int | None = None) -> dict[str, FluorescenceTrace]:
    """Pulse + decay for every realization; disorder-averaged flux per model.

    The local-model decay starts from the same full-model pulse-end state,
    so both models see identical initial conditions.
    """
    grid = decay_sample_grid(params) if sample_grid is None else np.asarray(sample_grid)

    def task(real: DisorderRealization) -> dict[str, np.ndarray]:
        end = run_pulse(real, params)
        return {model: trajectory_flux(
            run_decay(real, end, params, model=model, sample_grid=grid),
            real, params, model=model) for model in models}

    with ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
        per_real = list(pool.map(task, realizations))

    out = {}
    for model in models:
        total = np.zeros(grid.size)
        for res in per_real:  # fixed realization order: bit-stable reduction
            total += res[model]
        out[model] = FluorescenceTrace(times=grid.copy(),
                                       flux=total / len(realizations),
                                       n_traj=len(realizations))
    return out


def _flagged_fit(message: str) -> FitResult:
    return FitResult(names=["c", "gamma"], values=np.array([np.nan, np.nan]),
                     residual_norm=np.nan, converged=False, iterations=0,
                     message=message)


def run_point(params: ModelParams, flux: float, detuning: float, model: str,
              realizations: Sequence[DisorderRealization],
              workers: int | None = None) -> tuple[FluorescenceTrace, FitResult]:
    """One (flux, detuning) point: disorder-averaged decay trace plus the
    exponential fit in the configured window.  Fit failures are flagged on
    the result, never raised."""
    pt = params.replace(beta_in=float(np.sqrt(flux)), delta_c=float(detuning))
    trace = point_traces(pt, realizations, models=(model,), workers=workers)[model]
    try:
        fit = fit_exponential(trace, (params.fit_window_start, params.t_decay))
    except FitDomainError as exc:
        fit = _flagged_fit(str(exc))
    return trace, fit


@dataclass
class SweepResult:
    plan: SweepPlan
    records: list[dict]                 # per (flux, detuning, model)
    profile_fits: dict                  # (flux, model) -> double-Lorentzian FitResult
    comparison: list[dict] | None = None
    metadata: dict = field(default_factory=dict)

    def gamma_curve(self, flux: float, model: str) -> tuple[np.ndarray, np.ndarray]:
        rows = [r for r in self.records
                if r["flux"] == flux and r["model"] == model]
        rows.sort(key=lambda r: r["detuning"])
        return (np.array([r["detuning"] for r in rows]),
                np.array([r["gamma_over_kappa"] for r in rows]))


def run_detuning_sweep(plan: SweepPlan, workers: int | None = None,
                       progress=None,
                       trace_dir: str | Path | None = None) -> SweepResult:
    """Evaluate the whole grid, fitting Gamma per point and the
    double-Lorentzian profile per (flux, model) row."""
    t_start = _time.time()
    realizations = sample_ensemble(plan.base_params)
    records: list[dict] = []
    profile_fits: dict = {}
    for flux in plan.flux_list:
        for model in plan.models:
            gammas = []
            for detuning in plan.detuning_grid:
                pt = plan.base_params.replace(beta_in=float(np.sqrt(flux)),
                                              delta_c=float(detuning))
                traces = point_traces(pt, realizations, models=(model,),
                                      workers=workers)
                trace = traces[model]
                try:
                    fit = fit_exponential(
                        trace, (plan.base_params.fit_window_start,
                                plan.base_params.t_decay))
                except FitDomainError as exc:
                    fit = _flagged_fit(str(exc))
                gamma = fit["gamma"] if fit.converged else np.nan
                records.append({"flux": flux, "detuning": float(detuning),
                                "model": model, "gamma_over_kappa": gamma,
                                "fit_ok": bool(fit.converged),
                                "fit_message": fit.message})
                gammas.append(gamma)
                if trace_dir is not None:
                    name = f"trace_phi{flux:g}_dc{detuning:+g}_{model}.csv"
                    trace.export_csv(Path(trace_dir) / name)
            det = np.asarray(plan.detuning_grid)
            gam = np.asarray(gammas)
            ok = np.isfinite(gam)
            if np.sum(ok) >= 8:
                profile_fits[(flux, model)] = fit_double_lorentzian(det[ok], gam[ok])
            if progress is not None:
                progress(f"flux={flux:g} model={model}: "
                         f"{int(np.sum(ok))}/{det.size} points fit ok")
    metadata = _run_metadata(plan, realizations, _time.time() - t_start)
    return SweepResult(plan=plan, records=records, profile_fits=profile_fits,
                       metadata=metadata)


def run_saturation_curve(params: ModelParams, flux_grid: Sequence[float],
                         workers: int | None = None):
    """Resonant integrated fluorescence vs flux, fit by the PLE saturation
    curve.  Returns (table rows, FitResult with phi_0)."""
    if params.delta_c != 0.0:
        raise ValueError("saturation curve is defined for the resonant "
                         "configuration delta_c = 0")
    realizations = sample_ensemble(params)
    rows = []
    for flux in flux_grid:
        pt = params.replace(beta_in=float(np.sqrt(flux)))
        trace = point_traces(pt, realizations, models=("full",),
                             workers=workers)["full"]
        total = float(np.trapezoid(trace.flux, trace.times))
        rows.append({"flux": float(flux), "integrated_fluorescence": total})
    fluxes = np.array([r["flux"] for r in rows])
    totals = np.array([r["integrated_fluorescence"] for r in rows])
    fit = fit_ple_saturation(fluxes, totals)
    return rows, fit


def compare_models(plan: SweepPlan, workers: int | None = None,
                   phi_0: float | None = None,
                   sweep: SweepResult | None = None,
                   progress=None) -> list[dict]:
    """Per-flux maximum decay rate (normalized to the smallest flux),
    splitting, and offset for both models.

    ``phi_0`` defaults to a saturation-curve fit over the plan's flux list;
    an existing SweepResult can be reused to avoid re-running the grid.
    """
    if set(plan.models) != {"full", "local"}:
        raise ValueError("model comparison needs both 'full' and 'local'")
    if sweep is None:
        sweep = run_detuning_sweep(plan, workers=workers, progress=progress)
    if phi_0 is None:
        resonant = plan.base_params.replace(delta_c=0.0)
        _, sat_fit = run_saturation_curve(resonant, plan.flux_list,
                                          workers=workers)
        phi_0 = sat_fit.extras["phi_0"]
    rows = []
    base_max = {}
    for model in ("full", "local"):
        _, gam = sweep.gamma_curve(plan.flux_list[0], model)
        base_max[model] = float(np.nanmax(gam))
    for flux in plan.flux_list:
        for model in ("full", "local"):
            _, gam = sweep.gamma_curve(flux, model)
            max_gamma = float(np.nanmax(gam))
            fit = sweep.profile_fits.get((flux, model))
            rows.append({
                "flux": float(flux),
                "flux_over_phi0": float(flux / phi_0),
                "model": model,
                "max_gamma": max_gamma,
                "normalized_max_gamma": max_gamma / base_max[model],
                "splitting": (fit.extras["splitting"]
                              if fit is not None and fit.converged else np.nan),
                "offset_b": (fit["b"]
                             if fit is not None and fit.converged else np.nan),
            })
    sweep.comparison = rows
    return rows


def run_survival(params: ModelParams,
                 realizations: Sequence[DisorderRealization], time: float,
                 models: Sequence[str] = ("full", "local"), n_bins: int = 20,
                 workers: int | None = None) -> dict[str, SurvivalHistogram]:
    """Pulse once per realization, decay under each model, and bin the spin
    excitation at ``time`` over [-delta_inh, delta_inh]."""
    grid = np.array([0.0, float(time)])

    def task(real: DisorderRealization) -> dict[str, Trajectory]:
        end = run_pulse(real, params)
        return {model: run_decay(real, end, params, model=model,
                                 sample_grid=grid) for model in models}

    with ThreadPoolExecutor(max_workers=worker_count(workers)) as pool:
        per_real = list(pool.map(task, realizations))
    out = {}
    for model in models:
        trajs = [res[model] for res in per_real]
        out[model] = bin_survival(realizations, trajs, time, n_bins=n_bins,
                                  bin_range=(-params.delta_inh, params.delta_inh))
    return out


# ---------------------------------------------------------------------------
# persistence

def _run_metadata(plan: SweepPlan,
                  realizations: Sequence[DisorderRealization],
                  wall_time: float) -> dict:
    return {"run_id": plan.run_id,
            "code_version": __version__,
            "wall_time_s": wall_time,
            "seeds": {"master_seed": plan.base_params.master_seed,
                      "realization_seeds": [list(r.realization_seed)
                                            for r in realizations]}}


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(float(value))  # plain-float repr even for numpy scalars
    return str(value)


def write_manifest(plan: SweepPlan, directory: str | Path,
                   status: str = "incomplete", metadata: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    metadata = metadata or _run_metadata(plan, sample_ensemble(plan.base_params), 0.0)
    manifest = {"run_id": metadata["run_id"], "status": status,
                "code_version": metadata["code_version"],
                "wall_time_s": metadata.get("wall_time_s", 0.0),
                "params": plan.base_params.to_dict(),
                "plan": {"flux_list": list(plan.flux_list),
                         "detuning_grid": list(plan.detuning_grid),
                         "models": list(plan.models)},
                "seeds": metadata["seeds"]}
    path = directory / "manifest.json"
    try:
        path.write_text(json.dumps(manifest, indent=2) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write manifest at {path}: {exc}") from exc
    return path


def plan_from_manifest(path: str | Path) -> SweepPlan:
    data = json.loads(Path(path).read_text())
    params = ModelParams.from_dict(data["params"])
    return SweepPlan(base_params=params,
                     flux_list=tuple(data["plan"]["flux_list"]),
                     detuning_grid=tuple(data["plan"]["detuning_grid"]),
                     models=tuple(data["plan"]["models"]),
                     run_id=data["run_id"])


def persist_run(result: SweepResult, directory: str | Path) -> Path:
    """Write the manifest plus figure tables; returns the manifest path.

    fig3b.csv: flux, detuning, model, gamma_over_kappa, fit_ok.
    fig4b.csv (when a comparison ran): flux_over_phi0, model,
    normalized_max_gamma, splitting, offset_b.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    try:
        with open(directory / "fig3b.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["flux", "detuning", "model", "gamma_over_kappa",
                             "fit_ok"])
            for r in result.records:
                writer.writerow([_fmt(r["flux"]), _fmt(r["detuning"]),
                                 r["model"], _fmt(r["gamma_over_kappa"]),
                                 int(r["fit_ok"])])
        if result.comparison is not None:
            with open(directory / "fig4b.csv", "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["flux_over_phi0", "model",
                                 "normalized_max_gamma", "splitting",
                                 "offset_b"])
                for r in result.comparison:
                    writer.writerow([_fmt(r["flux_over_phi0"]), r["model"],
                                     _fmt(r["normalized_max_gamma"]),
                                     _fmt(r["splitting"]), _fmt(r["offset_b"])])
    except OSError as exc:
        raise OSError(f"cannot write sweep tables in {directory}: {exc}") from exc
    return write_manifest(result.plan, directory, status="complete",
                          metadata=result.metadata)
