"""Exact Lindblad evolution for one or two ions in a truncated Fock space.

Serves as an independent check on the mean-field equations: for small
ensembles the full quantum master equation (Tavis-Cummings Hamiltonian with
cavity loss and spin relaxation) is integrated exactly on the vectorized
density operator, and the expectation values <a>, <sigma_z^j>, <sigma_-^j>
are compared against the factorized dynamics.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .disorder import DisorderRealization
from .params import ModelParams

MAX_ORACLE_IONS = 2


class TruncationError(RuntimeError):
    """Fock cutoff too small: the top level acquired real population."""


@dataclass
class OracleResult:
    times: np.ndarray
    a: np.ndarray                 # <a>(t), complex
    sigma_z: np.ndarray           # (n_samples, N), real
    sigma_minus: np.ndarray       # (n_samples, N), complex
    top_level_population: float   # max population of the highest Fock state
    trace_deviation: float        # max |tr(rho) - 1| along the evolution
    min_eigenvalue: float         # most negative density-matrix eigenvalue

    def export_csv(self, path: str | Path) -> None:
        n = self.sigma_z.shape[1]
        header = ["time_over_kappa", "re_a", "im_a"]
        for j in range(n):
            header += [f"sigma_z_{j}", f"re_sigma_minus_{j}", f"im_sigma_minus_{j}"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for i, t in enumerate(self.times):
                row = [repr(float(t)), repr(float(self.a[i].real)),
                       repr(float(self.a[i].imag))]
                for j in range(n):
                    row += [repr(float(self.sigma_z[i, j])),
                            repr(float(self.sigma_minus[i, j].real)),
                            repr(float(self.sigma_minus[i, j].imag))]
                writer.writerow(row)


def _operators(fock_cutoff: int, n_ions: int):
    """Cavity and spin operators on the cavity (x) spins product space."""
    nc = fock_cutoff + 1
    a_c = np.diag(np.sqrt(np.arange(1, nc)), k=1).astype(complex)
    sm = np.array([[0.0, 1.0], [0.0, 0.0]], dtype=complex)  # |g><e|
    sz = np.array([[-1.0, 0.0], [0.0, 1.0]], dtype=complex)
    eye2 = np.eye(2, dtype=complex)

    def embed(ops: list[np.ndarray]) -> np.ndarray:
        out = ops[0]
        for op in ops[1:]:
            out = np.kron(out, op)
        return out

    a_full = embed([a_c] + [eye2] * n_ions)
    sm_full = []
    sz_full = []
    for j in range(n_ions):
        factors = [np.eye(nc, dtype=complex)]
        factors += [sm if k == j else eye2 for k in range(n_ions)]
        sm_full.append(embed(factors))
        factors = [np.eye(nc, dtype=complex)]
        factors += [sz if k == j else eye2 for k in range(n_ions)]
        sz_full.append(embed(factors))
    return a_full, sm_full, sz_full


def _liouvillian(h: np.ndarray, collapse: list[tuple[float, np.ndarray]]) -> np.ndarray:
    """Column-stacking Liouvillian: d vec(rho)/dt = L vec(rho)."""
    dim = h.shape[0]
    eye = np.eye(dim, dtype=complex)
    lv = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    for rate, c in collapse:
        cdc = c.conj().T @ c
        lv += rate * (np.kron(c.conj(), c)
                      - 0.5 * np.kron(eye, cdc)
                      - 0.5 * np.kron(cdc.T, eye))
    return lv


def quantum_oracle(params: ModelParams, realization: DisorderRealization,
                   fock_cutoff: int, t_span: tuple[float, float],
                   sample_times: Sequence[float], drive_on: bool = True,
                   initial_rho: np.ndarray | None = None,
                   top_population_limit: float = 1e-8) -> OracleResult:
    """Exact master-equation trajectories of <a>, <sigma_z>, <sigma_->.

    Limited to n_ions <= 2; raises TruncationError when the top Fock level
    population exceeds ``top_population_limit``.
    """
    n = realization.n_ions
    if n > MAX_ORACLE_IONS:
        raise ValueError(f"quantum oracle supports at most {MAX_ORACLE_IONS} "
                         f"ions, got {n}")
    if fock_cutoff < 1:
        raise ValueError("fock_cutoff must be >= 1")
    nc = fock_cutoff + 1
    a_op, sm_ops, sz_ops = _operators(fock_cutoff, n)
    dim = a_op.shape[0]

    h = params.delta_c * (a_op.conj().T @ a_op)
    for j in range(n):
        h = h + realization.deltas[j] * sz_ops[j] / 2.0
        h = h + realization.gs[j] * (a_op.conj().T @ sm_ops[j]
                                     + a_op @ sm_ops[j].conj().T)
    if drive_on and params.beta_in > 0.0:
        h = h - 1j * np.sqrt(params.kappa_c) * params.beta_in \
            * (a_op.conj().T - a_op)

    collapse = [(params.kappa, a_op)]
    collapse += [(params.gamma, sm_ops[j]) for j in range(n)]
    lv = _liouvillian(h, collapse)

    if initial_rho is None:
        rho0 = np.zeros((dim, dim), dtype=complex)
        rho0[0, 0] = 1.0  # vacuum (x) all ground: first basis state
    else:
        rho0 = np.asarray(initial_rho, dtype=complex)

    times = np.asarray(sample_times, dtype=float)
    sol = solve_ivp(lambda t, v: lv @ v, t_span,
                    rho0.reshape(-1, order="F"),
                    t_eval=times, method="RK45", rtol=1e-10, atol=1e-12)
    if not sol.success:
        raise RuntimeError(f"oracle integration failed: {sol.message}")

    a_tr = np.empty(times.size, dtype=complex)
    sz_tr = np.empty((times.size, n))
    sm_tr = np.empty((times.size, n), dtype=complex)
    top_pop = 0.0
    trace_dev = 0.0
    min_eig = 0.0
    # projector onto the top Fock level (any spin state)
    top_idx = np.arange(dim).reshape(nc, -1)[-1]
    for i in range(times.size):
        rho = sol.y[:, i].reshape(dim, dim, order="F")
        tr = np.trace(rho).real
        trace_dev = max(trace_dev, abs(tr - 1.0))
        a_tr[i] = np.trace(rho @ a_op)
        for j in range(n):
            sz_tr[i, j] = np.trace(rho @ sz_ops[j]).real
            sm_tr[i, j] = np.trace(rho @ sm_ops[j])
        top_pop = max(top_pop, float(np.sum(np.diag(rho).real[top_idx])))
        eigs = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
        min_eig = min(min_eig, float(eigs[0]))

    if top_pop > top_population_limit:
        raise TruncationError(
            f"top Fock level population {top_pop:.3e} exceeds "
            f"{top_population_limit:.1e}; increase fock_cutoff")
    return OracleResult(times=times, a=a_tr, sigma_z=sz_tr, sigma_minus=sm_tr,
                        top_level_population=top_pop, trace_deviation=trace_dev,
                        min_eigenvalue=min_eig)
