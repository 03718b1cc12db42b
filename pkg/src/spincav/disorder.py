"""Disorder distributions and ion-ensemble sampling.

Ion detunings are drawn from a Lorentzian (Cauchy) distribution with FWHM
``delta_inh`` via inverse-CDF sampling; couplings come from a Gaussian with
mean ``g_mean`` and standard deviation ``g_std``.  The last ion of every
realization is pinned exactly on resonance.  Sampling is a pure function of
(params, realization_index): per-realization seeds derive from the master
seed through a splittable counter scheme, with separate sub-streams for
detunings and couplings so the two stay uncorrelated.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .params import ModelParams


@dataclass(frozen=True)
class IonParams:
    """One ion: detuning from the drive and cavity coupling strength."""

    delta_j: float
    g_j: float


@dataclass(frozen=True)
class DisorderRealization:
    """One sampled ensemble of ion detunings and couplings.

    ``deltas`` and ``gs`` are aligned arrays of length n_ions; the resonant
    ion sits at the last index.  ``realization_seed`` records the spawn key
    that produced the draw.
    """

    deltas: np.ndarray
    gs: np.ndarray
    realization_seed: tuple

    def __post_init__(self):
        self.deltas.setflags(write=False)
        self.gs.setflags(write=False)

    @property
    def n_ions(self) -> int:
        return self.deltas.size

    @property
    def ions(self) -> list[IonParams]:
        return [IonParams(float(d), float(g)) for d, g in zip(self.deltas, self.gs)]


def lorentzian_pdf(delta, center, h):
    """Lorentzian density h / (pi * ((delta - center)^2 + h^2)).

    ``h`` is the half-width at half-maximum; the FWHM is 2h.
    """
    h = float(h)
    if h <= 0.0:
        raise ValueError(f"half-width h must be positive, got {h}")
    return h / (np.pi * ((np.asarray(delta, dtype=float) - center) ** 2 + h**2))


def gaussian_pdf(g, mean, sigma):
    """Normal density exp(-(g - mean)^2 / 2 sigma^2) / (sqrt(2 pi) sigma)."""
    sigma = float(sigma)
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    x = (np.asarray(g, dtype=float) - mean) / sigma
    return np.exp(-0.5 * x**2) / (np.sqrt(2.0 * np.pi) * sigma)


def _spawned_rng(master_seed: int, *spawn_key: int) -> np.random.Generator:
    seq = np.random.SeedSequence(master_seed, spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(seq))


def _sample_cauchy(rng: np.random.Generator, n: int, h: float, cut: float) -> np.ndarray:
    """Inverse-CDF Cauchy draws with |delta| > cut resampled."""
    out = np.empty(n)
    filled = 0
    while filled < n:
        u = rng.random(n - filled)
        draws = h * np.tan(np.pi * (u - 0.5))
        keep = draws[np.abs(draws) <= cut]
        out[filled:filled + keep.size] = keep
        filled += keep.size
    return out


def _sample_couplings(rng: np.random.Generator, n: int, mean: float, std: float) -> np.ndarray:
    """Gaussian coupling draws; non-positive values resampled (g is a magnitude)."""
    if std == 0.0:
        return np.full(n, mean)
    out = np.empty(n)
    filled = 0
    while filled < n:
        draws = rng.normal(mean, std, n - filled)
        keep = draws[draws > 0.0]
        out[filled:filled + keep.size] = keep
        filled += keep.size
    return out


def sample_disorder(params: ModelParams, realization_index: int) -> DisorderRealization:
    """Draw one disorder realization, deterministic in (master_seed, index).

    N-1 detunings come from the Lorentzian with half-width delta_inh/2
    (truncated at ``tail_cut * delta_inh``); the last ion is resonant.  All
    N couplings come from the Gaussian, drawn on an independent sub-stream.
    """
    if realization_index < 0:
        raise ValueError(f"realization_index must be >= 0, got {realization_index}")
    h = params.delta_inh / 2.0
    cut = params.tail_cut * params.delta_inh
    rng_delta = _spawned_rng(params.master_seed, realization_index, 0)
    rng_g = _spawned_rng(params.master_seed, realization_index, 1)

    deltas = np.zeros(params.n_ions)
    if params.n_ions > 1:
        deltas[:-1] = _sample_cauchy(rng_delta, params.n_ions - 1, h, cut)
    gs = _sample_couplings(rng_g, params.n_ions, params.g_mean, params.g_std)
    return DisorderRealization(deltas=deltas, gs=gs,
                               realization_seed=(params.master_seed, realization_index))


def sample_ensemble(params: ModelParams) -> list[DisorderRealization]:
    """All n_traj realizations for a parameter set, in index order."""
    return [sample_disorder(params, k) for k in range(params.n_traj)]


def export_realizations_csv(realizations: Iterable[DisorderRealization],
                            path: str | Path) -> None:
    """Write realizations as CSV rows (realization_index, ion_index, delta_j, g_j)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["realization_index", "ion_index", "delta_j", "g_j"])
        for k, real in enumerate(realizations):
            for j in range(real.n_ions):
                writer.writerow([k, j, repr(float(real.deltas[j])), repr(float(real.gs[j]))])
