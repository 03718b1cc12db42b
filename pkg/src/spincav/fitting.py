"""Nonlinear least-squares engine and the decay/lineshape model functions.

A damped Gauss-Newton (Levenberg-Marquardt) minimizer with finite-difference
Jacobians backs all fits: exponential decay of simulated traces, the
stretched-plus-single-exponential composite used for experimental photon
histograms, single and double Lorentzian detuning profiles, and the PLE
saturation curve.  Initial-guess heuristics are part of the contract and
documented on each fit function.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dynamics import FluorescenceTrace


class FitDomainError(ValueError):
    """Model evaluation produced NaN/inf, or the data cannot be fit at all."""


@dataclass
class FitResult:
    """Outcome of one least-squares fit."""

    names: list[str]
    values: np.ndarray
    residual_norm: float
    converged: bool
    iterations: int
    parameter_errors: np.ndarray | None = None
    message: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def parameters(self) -> dict[str, float]:
        return dict(zip(self.names, (float(v) for v in self.values)))

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])

    def error(self, name: str) -> float | None:
        if self.parameter_errors is None:
            return None
        return float(self.parameter_errors[self.names.index(name)])

    def to_dict(self) -> dict:
        return {"parameters": self.parameters,
                "parameter_errors": (None if self.parameter_errors is None else
                                     dict(zip(self.names, map(float, self.parameter_errors)))),
                "residual_norm": self.residual_norm,
                "converged": self.converged,
                "iterations": self.iterations,
                "message": self.message,
                **self.extras}

    def export_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def least_squares(model: Callable[[np.ndarray, np.ndarray], np.ndarray],
                  x: np.ndarray, y: np.ndarray, initial_guess: Sequence[float],
                  bounds: Sequence[tuple[float, float]] | None = None,
                  names: Sequence[str] | None = None,
                  weights: np.ndarray | None = None,
                  max_iter: int = 500, xtol: float = 1e-10,
                  gtol: float = 1e-12, fd_step: float = 1e-7) -> FitResult:
    """Levenberg-Marquardt minimization of sum((y - model(x, p))**2).

    Convergence when the relative parameter change drops below ``xtol`` or
    the gradient infinity-norm below ``gtol``; at most ``max_iter``
    iterations.  The Jacobian is finite-differenced with relative step
    ``fd_step``.  Box bounds are enforced by projecting trial points.
    Singular normal equations yield a flagged (non-converged) result.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    p = np.array(initial_guess, dtype=float)
    npar = p.size
    if x.size != y.size or x.size < npar:
        raise ValueError("need len(x) == len(y) >= number of parameters")
    if names is None:
        names = [f"p{i}" for i in range(npar)]
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)

    lo = np.full(npar, -np.inf)
    hi = np.full(npar, np.inf)
    if bounds is not None:
        for i, (a, b) in enumerate(bounds):
            lo[i], hi[i] = a, b
        p = np.clip(p, lo, hi)

    def residual(pv: np.ndarray) -> np.ndarray:
        f = np.asarray(model(x, pv), dtype=float)
        if not np.all(np.isfinite(f)):
            raise FitDomainError("model returned non-finite values")
        return w * (y - f)

    def jacobian(pv: np.ndarray, r0: np.ndarray) -> np.ndarray:
        jac = np.empty((y.size, npar))
        for k in range(npar):
            dp = fd_step * max(abs(pv[k]), 1.0)
            ptry = pv.copy()
            ptry[k] = min(pv[k] + dp, hi[k])
            if ptry[k] == pv[k]:
                ptry[k] = pv[k] - dp
            jac[:, k] = (residual(ptry) - r0) / (ptry[k] - pv[k])
        return jac

    r = residual(p)
    cost = float(r @ r)
    lam = 1e-3
    converged = False
    message = "max iterations reached"
    steps = 0  # accepted parameter updates
    for _ in range(max_iter):
        jac = jacobian(p, r)
        grad = jac.T @ r
        if np.max(np.abs(grad)) < gtol:
            converged = True
            message = "gradient below tolerance"
            break
        jtj = jac.T @ jac
        step_ok = False
        for _ in range(50):
            damped = jtj + lam * np.diag(np.maximum(np.diag(jtj), 1e-30))
            try:
                delta = np.linalg.solve(damped, -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            if not np.all(np.isfinite(delta)):
                lam *= 10.0
                continue
            p_try = np.clip(p + delta, lo, hi)
            try:
                r_try = residual(p_try)
            except FitDomainError:
                lam *= 10.0
                continue
            cost_try = float(r_try @ r_try)
            if cost_try <= cost:
                step_ok = True
                break
            lam *= 10.0
        if not step_ok:
            message = "no descent step found (singular or stalled)"
            break
        rel_change = np.linalg.norm(p_try - p) / max(np.linalg.norm(p), 1e-300)
        p, r, cost = p_try, r_try, cost_try
        steps += 1
        lam = max(lam / 10.0, 1e-12)
        if rel_change < xtol:
            converged = True
            message = "parameter change below tolerance"
            break

    errors = None
    if converged:
        try:
            jac = jacobian(p, r)
            dof = max(y.size - npar, 1)
            cov = np.linalg.inv(jac.T @ jac) * (cost / dof)
            errors = np.sqrt(np.maximum(np.diag(cov), 0.0))
        except np.linalg.LinAlgError:
            errors = None
    return FitResult(names=list(names), values=p,
                     residual_norm=float(np.sqrt(cost)), converged=converged,
                     iterations=steps, parameter_errors=errors, message=message)


# ---------------------------------------------------------------------------
# model functions

def lorentzian(x, center, h):
    """L(x, center, h) = h / (pi ((x - center)^2 + h^2)); FWHM = 2h."""
    return h / (np.pi * ((x - center) ** 2 + h**2))


def model_exponential(t, p):
    c, gamma = p
    return c * np.exp(-gamma * t)


def model_stretched_composite(t, p):
    amp_s, tau1, d, amp_e, tau2, offset = p
    with np.errstate(invalid="ignore"):
        stretched = amp_s * np.exp(-np.power(np.maximum(t, 0.0) / tau1, d))
    return stretched + amp_e * np.exp(-t / tau2) + offset


def model_lorentzian_single(x, p):
    amplitude, center, h, offset = p
    return amplitude * lorentzian(x, center, h) + offset


def model_double_lorentzian(x, p):
    a, delta_plus, h_plus, delta_minus, h_minus, b = p
    return a * (lorentzian(x, delta_plus, h_plus)
                + lorentzian(x, delta_minus, h_minus)) + b


def model_ple_saturation(phi, p):
    p1, p2 = p
    return p1 / (p2 + 1.0 / phi)


# ---------------------------------------------------------------------------
# experimental-data ingestion

GHZ_PER_INVERSE_NS = 1.0  # 1 GHz == 1/ns in the rate convention used here


@dataclass
class ExperimentalDataset:
    """Measured histogram or rate table with physical units attached.

    ``abscissa_unit`` is "ns" for time histograms or "GHz" for detuning
    tables; ``gamma_0`` is the optional bare-waveguide reference rate (in
    1/ns) used to normalize Purcell enhancements.
    """

    abscissa: np.ndarray
    counts: np.ndarray
    abscissa_unit: str = "ns"
    gamma_0: float | None = None

    def __post_init__(self):
        self.abscissa = np.asarray(self.abscissa, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.abscissa_unit not in ("ns", "GHz"):
            raise ValueError(f"unsupported unit {self.abscissa_unit!r}")
        if np.any(np.diff(self.abscissa) <= 0):
            raise ValueError("abscissa must be strictly increasing")
        if np.any(self.counts < 0):
            raise ValueError("counts must be non-negative")

    @classmethod
    def from_csv(cls, path: str | Path, gamma_0: float | None = None) -> "ExperimentalDataset":
        """Read (time_ns, counts) or (detuning_GHz, rate) CSV with a header."""
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [(float(a), float(b)) for a, b in reader]
        unit = "GHz" if "ghz" in header[0].lower() else "ns"
        data = np.array(rows)
        return cls(abscissa=data[:, 0], counts=data[:, 1],
                   abscissa_unit=unit, gamma_0=gamma_0)


def to_internal_units(values: np.ndarray, unit: str, kappa_ghz: float) -> np.ndarray:
    """Convert ns times or GHz detunings to kappa-units (kappa in GHz,
    equivalently 1/ns)."""
    if unit == "ns":
        return np.asarray(values) * kappa_ghz * GHZ_PER_INVERSE_NS
    if unit == "GHz":
        return np.asarray(values) / kappa_ghz
    raise ValueError(f"unsupported unit {unit!r}")


def from_internal_units(values: np.ndarray, unit: str, kappa_ghz: float) -> np.ndarray:
    if unit == "ns":
        return np.asarray(values) / (kappa_ghz * GHZ_PER_INVERSE_NS)
    if unit == "GHz":
        return np.asarray(values) * kappa_ghz
    raise ValueError(f"unsupported unit {unit!r}")


# ---------------------------------------------------------------------------
# fit drivers

def fit_exponential(trace: FluorescenceTrace,
                    window: tuple[float, float]) -> FitResult:
    """Fit c exp(-Gamma t) to the trace inside ``window``.

    First pass is a linear regression on log flux (non-positive samples are
    skipped there), refined by least squares on the linear scale.  Gamma is
    returned in units of kappa.
    """
    t_lo, t_hi = window
    mask = (trace.times >= t_lo) & (trace.times <= t_hi)
    if np.sum(mask) < 10:
        raise FitDomainError("fewer than 10 samples in the fit window")
    t = trace.times[mask]
    f = trace.flux[mask]
    pos = f > 0.0
    if not np.any(pos):
        raise FitDomainError("all flux samples in the window are non-positive")
    slope, intercept = np.polyfit(t[pos], np.log(f[pos]), 1)
    guess = [float(np.exp(intercept)), float(-slope)]
    result = least_squares(model_exponential, t, f, guess, names=["c", "gamma"])
    result.extras["window"] = [float(t_lo), float(t_hi)]
    return result


def fit_stretched_composite(dataset: ExperimentalDataset,
                            initial_guess: Sequence[float] | None = None,
                            poisson_weights: bool = False) -> FitResult:
    """Fit A exp[-(t/tau1)^d] + B exp(-t/tau2) + C to a photon histogram.

    Bounded: d in (0, 1.5], tau1, tau2 > 0.  Heuristic guesses: C from the
    tail minimum, A from the initial drop, tau1 from the 1/e crossing,
    d = 1, B = A/10, tau2 = 4 tau1.  Reports Gamma = 1/tau1 and, when the
    dataset carries gamma_0, the Purcell ratio Gamma/gamma_0.
    """
    t = dataset.abscissa
    c = dataset.counts
    if t.size < 20:
        raise FitDomainError("need at least 20 samples")
    if np.ptp(c) == 0.0:
        return FitResult(names=["A", "tau1", "d", "B", "tau2", "C"],
                         values=np.array([0.0, 1.0, 1.0, 0.0, 1.0, c[0]]),
                         residual_norm=0.0, converged=False, iterations=0,
                         message="degenerate data: constant counts")
    if initial_guess is None:
        offset = float(np.min(c))
        amp = float(c[0] - offset)
        target = offset + amp / np.e
        below = np.nonzero(c <= target)[0]
        tau1 = float(t[below[0]] - t[0]) if below.size else float(t[-1] - t[0])
        tau1 = max(tau1, 1e-6 * (t[-1] - t[0]))
        initial_guess = [amp, tau1, 1.0, amp / 10.0, 4.0 * tau1, offset]
    span = float(t[-1] - t[0])
    bounds = [(0.0, np.inf), (1e-9 * span, np.inf), (1e-6, 1.5),
              (0.0, np.inf), (1e-9 * span, np.inf), (-np.inf, np.inf)]
    weights = None
    if poisson_weights:
        weights = 1.0 / np.sqrt(np.maximum(c, 1.0))
    result = least_squares(model_stretched_composite, t, c, initial_guess,
                           bounds=bounds, weights=weights,
                           names=["A", "tau1", "d", "B", "tau2", "C"])
    if result.converged and result["A"] <= 0.0:
        result.converged = False
        result.message = "stretched amplitude at boundary; tau1 unidentifiable"
    result.extras["gamma"] = 1.0 / result["tau1"]
    if dataset.gamma_0 is not None:
        result.extras["purcell_ratio"] = result.extras["gamma"] / dataset.gamma_0
    return result


def _lorentzian_guess(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float, float]:
    """Peak position, half-width from half-max crossings, amplitude, offset."""
    offset = float(np.min(y))
    i_peak = int(np.argmax(y))
    center = float(x[i_peak])
    half = offset + (y[i_peak] - offset) / 2.0
    above = np.nonzero(y >= half)[0]
    if above.size >= 2:
        h = max(float(x[above[-1]] - x[above[0]]) / 2.0, 1e-6 * np.ptp(x))
    else:
        h = np.ptp(x) / 4.0
    amplitude = float((y[i_peak] - offset) * np.pi * h)
    return amplitude, center, h, offset


def fit_lorentzian_single(detunings: np.ndarray, rates: np.ndarray) -> FitResult:
    """Fit amplitude * L(x, center, h) + offset; reports FWHM = 2h.

    Guesses come from the data maximum and its half-max crossings.
    """
    x = np.asarray(detunings, dtype=float)
    y = np.asarray(rates, dtype=float)
    if x.size < 6:
        raise FitDomainError("need at least 6 points")
    guess = _lorentzian_guess(x, y)
    bounds = [(0.0, np.inf), (-np.inf, np.inf), (1e-9 * max(np.ptp(x), 1.0), np.inf),
              (-np.inf, np.inf)]
    result = least_squares(model_lorentzian_single, x, y, guess, bounds=bounds,
                           names=["amplitude", "center", "h", "offset"])
    result.extras["fwhm"] = 2.0 * result["h"]
    if result.converged and result["amplitude"] <= 1e-12 * max(abs(y).max(), 1.0):
        result.converged = False
        result.message = "amplitude at boundary: offset-only data"
    return result


def _two_peak_guess(x: np.ndarray, y: np.ndarray):
    """Locations of the two largest local maxima (fallback: quartile points)."""
    peaks = [i for i in range(1, x.size - 1)
             if y[i] >= y[i - 1] and y[i] >= y[i + 1]]
    peaks.sort(key=lambda i: -y[i])
    if len(peaks) >= 2 and x[peaks[0]] != x[peaks[1]]:
        return float(x[peaks[0]]), float(x[peaks[1]])
    lo = float(np.percentile(x, 25))
    hi = float(np.percentile(x, 75))
    return lo, hi


def fit_double_lorentzian(detunings: np.ndarray, rates: np.ndarray) -> FitResult:
    """Fit a [L(x, d_plus, h_plus) + L(x, d_minus, h_minus)] + b.

    Peak guesses are the two largest local maxima of the data.  The result
    is normalized so d_plus >= d_minus; the splitting d_plus - d_minus is
    reported in extras.
    """
    x = np.asarray(detunings, dtype=float)
    y = np.asarray(rates, dtype=float)
    if x.size < 8:
        raise FitDomainError("need at least 8 points")
    p1, p2 = _two_peak_guess(x, y)
    offset = float(np.min(y))
    h0 = max(np.ptp(x) / 8.0, 1e-6)
    amp = float((np.max(y) - offset) * np.pi * h0)
    guess = [amp, max(p1, p2), h0, min(p1, p2), h0, offset]
    wmin = 1e-9 * max(np.ptp(x), 1.0)
    bounds = [(0.0, np.inf), (-np.inf, np.inf), (wmin, np.inf),
              (-np.inf, np.inf), (wmin, np.inf), (-np.inf, np.inf)]
    names = ["a", "delta_plus", "h_plus", "delta_minus", "h_minus", "b"]
    result = least_squares(model_double_lorentzian, x, y, guess, bounds=bounds,
                           names=names)
    if result["delta_plus"] < result["delta_minus"]:
        v = result.values
        v[[1, 2, 3, 4]] = v[[3, 4, 1, 2]]
        if result.parameter_errors is not None:
            result.parameter_errors[[1, 2, 3, 4]] = result.parameter_errors[[3, 4, 1, 2]]
    result.extras["splitting"] = result["delta_plus"] - result["delta_minus"]
    return result


def fit_ple_saturation(fluxes: np.ndarray, intensities: np.ndarray) -> FitResult:
    """Fit the saturation curve P(phi) = p1 / (p2 + 1/phi).

    Guesses: p1 from the low-flux slope, p2 from the largest-flux
    intensity.  Reports phi_0 = 1/p2, the flux where saturation sets in.
    """
    phi = np.asarray(fluxes, dtype=float)
    y = np.asarray(intensities, dtype=float)
    if phi.size < 4:
        raise FitDomainError("need at least 4 flux points")
    if phi.max() / phi.min() < 10.0:
        raise FitDomainError("flux points must span at least one decade")
    p1 = float(y[0] / phi[0])
    p2 = p1 / max(float(y[-1]), 1e-300)
    result = least_squares(model_ple_saturation, phi, y, [p1, p2],
                           bounds=[(0.0, np.inf), (1e-300, np.inf)],
                           names=["p1", "p2"])
    result.extras["phi_0"] = 1.0 / result["p2"]
    return result
