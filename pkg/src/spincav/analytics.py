"""Steady-state machinery, cooperativity diagnostics, and survival binning.

The drive-on steady state couples the cavity field to the spin populations
self-consistently: the field follows from the populations through the
spin self-energy, and each population saturates according to the local
field.  A damped alternating iteration solves the pair; an |a|-bisection
fallback handles the saturation regime where plain iteration oscillates.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .disorder import DisorderRealization, IonParams
from .dynamics import Trajectory
from .params import ModelParams


@dataclass
class SteadyState:
    a_ss: complex
    s_z_ss: np.ndarray
    s_minus_ss: np.ndarray
    iterations: int
    converged: bool
    residual: float


@dataclass
class CooperativityReport:
    c_collective: float
    c_inh: float
    n_eff: int
    kappa_renormalized: float

    def to_dict(self) -> dict:
        return {"c_collective": self.c_collective, "c_inh": self.c_inh,
                "n_eff": self.n_eff,
                "kappa_renormalized": self.kappa_renormalized}

    def export_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def export_csv(self, path: str | Path) -> None:
        d = self.to_dict()
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(d.keys())
            writer.writerow(d.values())


def _field_given_populations(s_z: np.ndarray, realization: DisorderRealization,
                             params: ModelParams) -> complex:
    """Cavity field for fixed spin populations (self-energy in the denominator)."""
    self_energy = np.sum(realization.gs**2
                         / (realization.deltas - 1j * params.gamma / 2.0) * s_z)
    denom = params.delta_c - 1j * params.kappa / 2.0 + self_energy
    return 1j * np.sqrt(params.kappa_c) * params.beta_in / denom


def _populations_given_field(a: complex, realization: DisorderRealization,
                             params: ModelParams) -> np.ndarray:
    sat = (2.0 * realization.gs**2 * abs(a) ** 2
           / (realization.deltas**2 + params.gamma**2 / 4.0))
    return -1.0 / (1.0 + sat)


def single_spin_steady_state(a_ss: complex, ion: IonParams,
                             gamma: float) -> tuple[float, complex]:
    """Saturated single-spin steady state under a fixed coherent cavity field."""
    denom = 8.0 * abs(a_ss) ** 2 * ion.g_j**2 + gamma**2 + 4.0 * ion.delta_j**2
    s_z = -1.0 + 8.0 * abs(a_ss) ** 2 * ion.g_j**2 / denom
    s_minus = -2.0 * a_ss * ion.g_j * (1j * gamma + 2.0 * ion.delta_j) / denom
    return s_z, s_minus


def _coherences_at(a: complex, realization: DisorderRealization,
                   params: ModelParams) -> np.ndarray:
    denom = (8.0 * abs(a) ** 2 * realization.gs**2 + params.gamma**2
             + 4.0 * realization.deltas**2)
    return (-2.0 * a * realization.gs
            * (1j * params.gamma + 2.0 * realization.deltas) / denom)


def _residual(a: complex, s_z: np.ndarray, realization: DisorderRealization,
              params: ModelParams) -> float:
    return max(abs(_field_given_populations(s_z, realization, params) - a),
               float(np.max(np.abs(_populations_given_field(a, realization, params)
                                   - s_z))) if s_z.size else 0.0)


def steady_state_self_consistent(realization: DisorderRealization,
                                 params: ModelParams,
                                 tol: float = 1e-12,
                                 max_iter: int = 10_000) -> SteadyState:
    """Self-consistent drive-on steady state of field and populations.

    Damped alternating iteration (damping 0.5); when the residual fails to
    shrink for 100 consecutive iterations, falls back to bisection on |a|²,
    which selects the branch continuously connected to the weak-drive
    solution.  Non-convergence is flagged, not raised.
    """
    n = realization.n_ions
    if params.beta_in == 0.0:
        return SteadyState(0.0j, np.full(n, -1.0), np.zeros(n, dtype=complex),
                           0, True, 0.0)

    s_z = np.full(n, -1.0)
    a = _field_given_populations(s_z, realization, params)
    best = np.inf
    stall = 0
    for it in range(1, max_iter + 1):
        a_new = _field_given_populations(s_z, realization, params)
        a = a + 0.5 * (a_new - a)
        s_new = _populations_given_field(a, realization, params)
        s_z = s_z + 0.5 * (s_new - s_z)
        res = _residual(a, s_z, realization, params)
        if res < tol:
            return SteadyState(a, s_z, _coherences_at(a, realization, params),
                               it, True, res)
        if res < best - tol:
            best = res
            stall = 0
        else:
            stall += 1
            if stall >= 100:
                return _steady_state_bisection(realization, params, tol, it)
    return SteadyState(a, s_z, _coherences_at(a, realization, params),
                       max_iter, False, _residual(a, s_z, realization, params))


def _steady_state_bisection(realization: DisorderRealization,
                            params: ModelParams, tol: float,
                            iters_used: int) -> SteadyState:
    """Bisection on x = |a|²: populations depend on the field only through
    |a|², so the fixed point reduces to a scalar root."""

    def mismatch(x: float) -> float:
        s_z = -1.0 / (1.0 + 2.0 * realization.gs**2 * x
                      / (realization.deltas**2 + params.gamma**2 / 4.0))
        a = _field_given_populations(s_z, realization, params)
        return abs(a) ** 2 - x

    lo = 0.0
    hi = 4.0 * params.kappa_c * params.beta_in**2 / params.kappa**2 * (1.0 + 1e-9)
    f_lo = mismatch(lo)
    it = iters_used
    if f_lo <= 0.0:
        hi = lo
    else:
        for _ in range(200):
            it += 1
            mid = 0.5 * (lo + hi)
            if mismatch(mid) > 0.0:
                lo = mid
            else:
                hi = mid
            if hi - lo < tol * max(1.0, hi):
                break
    x = 0.5 * (lo + hi)
    s_z = -1.0 / (1.0 + 2.0 * realization.gs**2 * x
                  / (realization.deltas**2 + params.gamma**2 / 4.0))
    a = _field_given_populations(s_z, realization, params)
    s_z = _populations_given_field(a, realization, params)
    res = _residual(a, s_z, realization, params)
    return SteadyState(a, s_z, _coherences_at(a, realization, params),
                       it, res < np.sqrt(tol), res)


def disorder_averaged_field(params: ModelParams, n_eff: int) -> complex:
    """Weak-drive disorder average of the steady-state field: the averaged
    self-energy is purely imaginary and only renormalizes the cavity decay."""
    if n_eff > params.n_ions:
        raise ValueError(f"n_eff = {n_eff} exceeds n_ions = {params.n_ions}")
    widening = (2.0 * n_eff * (params.g_mean**2 + params.g_std**2)
                / (params.gamma + params.delta_inh))
    return (1j * np.sqrt(params.kappa_c) * params.beta_in
            / (params.delta_c - 1j * (params.kappa / 2.0 + widening)))


def cooperativities(params: ModelParams,
                    n_eff: int | None = None) -> CooperativityReport:
    """Collective and inhomogeneous cooperativities plus the renormalized
    cavity damping rate implied by the averaged self-energy."""
    if n_eff is None:
        n_eff = params.n_ions
    c = 4.0 * params.n_ions * params.g_mean**2 / (params.kappa * params.gamma)
    c_inh = 4.0 * n_eff * params.g_mean**2 / (params.delta_inh * params.kappa)
    widening = (2.0 * n_eff * (params.g_mean**2 + params.g_std**2)
                / (params.gamma + params.delta_inh))
    return CooperativityReport(c_collective=c, c_inh=c_inh, n_eff=n_eff,
                               kappa_renormalized=params.kappa + 2.0 * widening)


def count_depolarized(steady: SteadyState) -> int:
    """Ions with s_z > -1/2: a diagnostic candidate for N_eff."""
    return int(np.sum(steady.s_z_ss > -0.5))


@dataclass
class SurvivalHistogram:
    """Detuning-binned spin excitation pooled over disorder realizations.

    Empty bins carry NaN (missing), never zero.
    """

    bin_edges: np.ndarray
    mean_excitation: np.ndarray
    std_excitation: np.ndarray
    stderr_excitation: np.ndarray
    fractional_survival: np.ndarray
    survival_stderr: np.ndarray
    counts: np.ndarray
    time: float

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    def to_dict(self) -> dict:
        return {"time": self.time,
                "bin_edges": self.bin_edges.tolist(),
                "mean_excitation": self.mean_excitation.tolist(),
                "std_excitation": self.std_excitation.tolist(),
                "stderr_excitation": self.stderr_excitation.tolist(),
                "fractional_survival": self.fractional_survival.tolist(),
                "survival_stderr": self.survival_stderr.tolist(),
                "counts": self.counts.tolist()}

    def export_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    def export_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_center", "count", "mean_excitation",
                             "std_excitation", "fractional_survival"])
            for i in range(self.counts.size):
                writer.writerow([self.bin_centers[i], self.counts[i],
                                 self.mean_excitation[i], self.std_excitation[i],
                                 self.fractional_survival[i]])


def bin_survival(realizations: Sequence[DisorderRealization],
                 trajectories: Sequence[Trajectory], time: float,
                 n_bins: int = 20,
                 bin_range: tuple[float, float] | None = None) -> SurvivalHistogram:
    """Bin spins by detuning and pool the excitation 1 + s_z at ``time``.

    Fractional survival is the pooled mean excitation at ``time`` divided
    by the pooled mean at the trajectory start (pulse end).
    """
    if len(realizations) != len(trajectories):
        raise ValueError("one trajectory per realization required")
    if bin_range is None:
        inh = 2.0 * np.max([np.max(np.abs(r.deltas), initial=0.0)
                            for r in realizations])
        # default window covers +- delta_inh; infer from data when unknown
        bin_range = (-inh / 2.0, inh / 2.0) if inh > 0 else (-1.0, 1.0)
    edges = np.linspace(bin_range[0], bin_range[1], n_bins + 1)

    deltas = np.concatenate([r.deltas for r in realizations])
    exc_t = []
    exc_0 = []
    for traj in trajectories:
        if not (traj.times[0] - 1e-9 <= time <= traj.times[-1] + 1e-9):
            raise ValueError(f"time {time} outside trajectory span")
        idx = int(np.argmin(np.abs(traj.times - time)))
        exc_t.append(1.0 + traj.s_z[idx])
        exc_0.append(1.0 + traj.s_z[0])
    exc_t = np.concatenate(exc_t)
    exc_0 = np.concatenate(exc_0)

    nb = n_bins
    mean = np.full(nb, np.nan)
    std = np.full(nb, np.nan)
    stderr = np.full(nb, np.nan)
    surv = np.full(nb, np.nan)
    surv_err = np.full(nb, np.nan)
    counts = np.zeros(nb, dtype=int)
    which = np.digitize(deltas, edges) - 1
    for b in range(nb):
        mask = which == b
        counts[b] = int(np.sum(mask))
        if counts[b] == 0:
            continue
        et = exc_t[mask]
        e0 = exc_0[mask]
        mean[b] = et.mean()
        std[b] = et.std(ddof=1) if counts[b] > 1 else 0.0
        stderr[b] = std[b] / np.sqrt(counts[b])
        if e0.mean() > 0.0:
            surv[b] = et.mean() / e0.mean()
            # first-order error propagation of the pooled-mean ratio
            se0 = (e0.std(ddof=1) if counts[b] > 1 else 0.0) / np.sqrt(counts[b])
            surv_err[b] = surv[b] * np.sqrt(
                (stderr[b] / et.mean()) ** 2 + (se0 / e0.mean()) ** 2
            ) if et.mean() > 0 else np.nan
    return SurvivalHistogram(bin_edges=edges, mean_excitation=mean,
                             std_excitation=std, stderr_excitation=stderr,
                             fractional_survival=surv, survival_stderr=surv_err,
                             counts=counts, time=time)
