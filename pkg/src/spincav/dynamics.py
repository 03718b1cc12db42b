"""Mean-field dynamics of the driven spin ensemble and its fluorescence.

Two models share one integrator kernel: the full collective model, where
every spin talks to the common cavity field, and the effective local model
for the decay phase, where the cavity rings down freely and each spin keeps
only a Purcell-enhanced local relaxation rate set by the cavity density of
states at its detuning.

The standard protocol is two-phase: drive on from the vacuum/ground state
for ``t_pulse``, then drive off for ``t_decay`` while the output flux is
recorded.  Disorder-averaged traces are reductions over per-realization
trajectories in fixed realization order, so results do not depend on how
the work is scheduled.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import _kernels
from .disorder import DisorderRealization, IonParams
from .params import ModelParams


class StiffnessError(RuntimeError):
    """Integrator step size underflowed; carries the failing time."""

    def __init__(self, t_fail: float):
        super().__init__(f"step-size underflow at t = {t_fail:.6g}")
        self.t_fail = t_fail


@dataclass
class SystemState:
    """Mean-field phase-space point: cavity amplitude plus Bloch components."""

    a: complex
    s_minus: np.ndarray   # complex, per ion
    s_z: np.ndarray       # real, per ion

    @property
    def n_ions(self) -> int:
        return self.s_z.size

    def copy(self) -> "SystemState":
        return SystemState(self.a, self.s_minus.copy(), self.s_z.copy())

    def pack(self) -> np.ndarray:
        """Flatten to the real vector layout used by the integrator."""
        n = self.n_ions
        y = np.empty(2 + 3 * n)
        y[0] = self.a.real
        y[1] = self.a.imag
        y[2:2 + 2 * n:2] = self.s_minus.real
        y[3:2 + 2 * n:2] = self.s_minus.imag
        y[2 + 2 * n:] = self.s_z
        return y

    @classmethod
    def unpack(cls, y: np.ndarray) -> "SystemState":
        n = (y.size - 2) // 3
        return cls(a=complex(y[0], y[1]),
                   s_minus=y[2:2 + 2 * n:2] + 1j * y[3:2 + 2 * n:2],
                   s_z=y[2 + 2 * n:].copy())


def ground_state(n_ions: int) -> SystemState:
    """Cavity vacuum, all ions in the ground state: a = s_- = 0, s_z = -1."""
    return SystemState(a=0.0 + 0.0j,
                       s_minus=np.zeros(n_ions, dtype=complex),
                       s_z=np.full(n_ions, -1.0))


@dataclass
class Trajectory:
    """Sampled states on a strictly increasing time grid."""

    times: np.ndarray
    ys: np.ndarray        # (n_samples, 2 + 3N) flat real states
    drive_on: bool

    @property
    def n_ions(self) -> int:
        return (self.ys.shape[1] - 2) // 3

    @property
    def a(self) -> np.ndarray:
        return self.ys[:, 0] + 1j * self.ys[:, 1]

    @property
    def s_minus(self) -> np.ndarray:
        n = self.n_ions
        return self.ys[:, 2:2 + 2 * n:2] + 1j * self.ys[:, 3:2 + 2 * n:2]

    @property
    def s_z(self) -> np.ndarray:
        return self.ys[:, 2 + 2 * self.n_ions:]

    @property
    def states(self) -> list[SystemState]:
        return [SystemState.unpack(y) for y in self.ys]

    def state_at(self, i: int) -> SystemState:
        return SystemState.unpack(self.ys[i])


@dataclass
class FluorescenceTrace:
    """Disorder-averaged output photon flux, times measured from pulse end."""

    times: np.ndarray
    flux: np.ndarray
    n_traj: int

    def export_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["time_over_kappa", "flux", "n_traj"])
            for t, f in zip(self.times, self.flux):
                writer.writerow([repr(float(t)), repr(float(f)), self.n_traj])

    @classmethod
    def from_csv(cls, path: str | Path) -> "FluorescenceTrace":
        data = np.genfromtxt(path, delimiter=",", names=True)
        return cls(times=np.atleast_1d(data["time_over_kappa"]),
                   flux=np.atleast_1d(data["flux"]),
                   n_traj=int(np.atleast_1d(data["n_traj"])[0]))


def _check_dims(state: SystemState, realization: DisorderRealization) -> None:
    if state.n_ions != realization.n_ions:
        raise ValueError(f"state has {state.n_ions} ions, realization has "
                         f"{realization.n_ions}")


def rhs_full(state: SystemState, realization: DisorderRealization,
             params: ModelParams, drive_on: bool) -> SystemState:
    """Time derivative of the full collective mean-field model."""
    _check_dims(state, realization)
    a, sm, sz = state.a, state.s_minus, state.s_z
    g, d = realization.gs, realization.deltas
    drive = np.sqrt(params.kappa_c) * params.beta_in if drive_on else 0.0
    da = (-(1j * params.delta_c + params.kappa / 2.0) * a
          - 1j * np.sum(g * sm) - drive)
    dsm = -(1j * d + params.gamma / 2.0) * sm + 1j * g * a * sz
    dsz = (2j * g * (np.conj(a) * sm - a * np.conj(sm))).real \
        - params.gamma * (1.0 + sz)
    return SystemState(a=da, s_minus=dsm, s_z=dsz)


def gamma_eff(ion: IonParams, params: ModelParams) -> float:
    """Total local decay rate: intrinsic plus Purcell term from the cavity
    density of states at the ion's detuning."""
    denom = (params.delta_c - ion.delta_j) ** 2 + params.kappa**2 / 4.0
    return params.gamma + params.kappa * ion.g_j**2 / denom


def gamma_eff_array(realization: DisorderRealization,
                    params: ModelParams) -> np.ndarray:
    denom = (params.delta_c - realization.deltas) ** 2 + params.kappa**2 / 4.0
    return params.gamma + params.kappa * realization.gs**2 / denom


def rhs_local(state: SystemState, realization: DisorderRealization,
              params: ModelParams) -> SystemState:
    """Time derivative of the effective local model (decay phase only)."""
    _check_dims(state, realization)
    a, sm, sz = state.a, state.s_minus, state.s_z
    g, d = realization.gs, realization.deltas
    geff = gamma_eff_array(realization, params)
    da = -(1j * params.delta_c + params.kappa / 2.0) * a
    dsm = -(1j * d + geff / 2.0) * sm + 1j * g * a * sz
    dsz = (2j * g * (np.conj(a) * sm - a * np.conj(sm))).real - geff * (1.0 + sz)
    return SystemState(a=da, s_minus=dsm, s_z=dsz)


def _kernel_args(realization: DisorderRealization, params: ModelParams,
                 drive_on: bool, model: str):
    if model == "full":
        gammas = np.full(realization.n_ions, params.gamma)
        collective = True
    elif model == "local":
        gammas = gamma_eff_array(realization, params)
        collective = False
    else:
        raise ValueError(f"unknown model {model!r}; use 'full' or 'local'")
    drive = np.sqrt(params.kappa_c) * params.beta_in if drive_on else 0.0
    return (params.delta_c, params.kappa, drive,
            realization.deltas, realization.gs, gammas, collective)


def integrate(initial: SystemState, realization: DisorderRealization,
              params: ModelParams, t_span: tuple[float, float],
              drive_on: bool, sample_grid: Sequence[float] | None = None,
              model: str = "full") -> Trajectory:
    """Adaptive RK 4(5) integration sampled on ``sample_grid``.

    The grid must lie inside ``t_span``; it defaults to the two endpoints.
    """
    _check_dims(initial, realization)
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t1 <= t0:
        raise ValueError(f"t_span must be positive, got {t_span}")
    if sample_grid is None:
        grid = np.array([t0, t1])
    else:
        grid = np.asarray(sample_grid, dtype=float)
        if grid.size and (grid[0] < t0 - 1e-12 or grid[-1] > t1 + 1e-12):
            raise ValueError("sample grid extends outside t_span")
    args = _kernel_args(realization, params, drive_on, model)
    samples, _, status, t_fail = _kernels.integrate_flat(
        initial.pack(), t0, t1, grid, params.rtol, params.atol, *args)
    if status != _kernels.STATUS_OK:
        raise StiffnessError(t_fail)
    return Trajectory(times=grid.copy(), ys=samples, drive_on=drive_on)


def run_pulse(realization: DisorderRealization,
              params: ModelParams) -> SystemState:
    """Drive-on evolution from the vacuum/ground state for t_pulse."""
    initial = ground_state(realization.n_ions)
    if params.t_pulse == 0.0 or params.beta_in == 0.0:
        return initial
    args = _kernel_args(realization, params, True, "full")
    grid = np.empty(0)
    _, y_final, status, t_fail = _kernels.integrate_flat(
        initial.pack(), 0.0, params.t_pulse, grid, params.rtol, params.atol, *args)
    if status != _kernels.STATUS_OK:
        raise StiffnessError(t_fail)
    return SystemState.unpack(y_final)


def decay_sample_grid(params: ModelParams,
                      samples_per_kappa: float | None = None) -> np.ndarray:
    density = samples_per_kappa or params.samples_per_kappa
    n = int(round(params.t_decay * density))
    return np.linspace(0.0, params.t_decay, n + 1)


def run_decay(realization: DisorderRealization, state_at_pulse_end: SystemState,
              params: ModelParams, model: str = "full",
              sample_grid: Sequence[float] | None = None) -> Trajectory:
    """Drive-off evolution for t_decay, sampled on a uniform grid
    (default density ``samples_per_kappa``); time origin at pulse end."""
    if sample_grid is None:
        sample_grid = decay_sample_grid(params)
    return integrate(state_at_pulse_end, realization, params,
                     (0.0, params.t_decay), drive_on=False,
                     sample_grid=sample_grid, model=model)


def output_flux(state: SystemState, params: ModelParams,
                drive_on: bool) -> float:
    """Photon flux at the detector: |sqrt(kappa_c) a + beta_in|²."""
    beta = params.beta_in if drive_on else 0.0
    return abs(np.sqrt(params.kappa_c) * state.a + beta) ** 2


def trajectory_flux(traj: Trajectory, realization: DisorderRealization,
                    params: ModelParams, model: str = "full") -> np.ndarray:
    """Output flux along a drive-off trajectory.

    For the full model this is kappa_c |a|²; the local model adds the rate
    at which each spin emits into its own adiabatically eliminated cavity
    channel, gamma_eff_j (1 + s_z^j)/2, reported as a flux.
    """
    cavity = params.kappa_c * np.abs(traj.a) ** 2
    if model == "full":
        return cavity
    geff = gamma_eff_array(realization, params)
    return cavity + np.sum(geff[None, :] * (1.0 + traj.s_z) / 2.0, axis=1)


def fluorescence_full(realizations: Sequence[DisorderRealization],
                      params: ModelParams,
                      sample_grid: Sequence[float] | None = None) -> FluorescenceTrace:
    """Disorder-averaged decay flux of the full model, each realization
    preceded by its own excitation pulse."""
    if sample_grid is None:
        sample_grid = decay_sample_grid(params)
    grid = np.asarray(sample_grid, dtype=float)
    total = np.zeros(grid.size)
    for real in realizations:
        end = run_pulse(real, params)
        traj = run_decay(real, end, params, model="full", sample_grid=grid)
        total += trajectory_flux(traj, real, params, model="full")
    return FluorescenceTrace(times=grid, flux=total / len(realizations),
                             n_traj=len(realizations))


def fluorescence_local(trajectories: Sequence[Trajectory],
                       realizations: Sequence[DisorderRealization],
                       params: ModelParams) -> FluorescenceTrace:
    """Disorder-averaged flux of the local model from its decay trajectories."""
    if len(trajectories) != len(realizations):
        raise ValueError("one trajectory per realization required")
    grid = trajectories[0].times
    total = np.zeros(grid.size)
    for traj, real in zip(trajectories, realizations):
        total += trajectory_flux(traj, real, params, model="local")
    return FluorescenceTrace(times=grid.copy(), flux=total / len(trajectories),
                             n_traj=len(trajectories))


def excitation(state: SystemState) -> float:
    """Total stored excitation: |a|² plus sum of (1 + s_z)/2."""
    return abs(state.a) ** 2 + float(np.sum(1.0 + state.s_z) / 2.0)
