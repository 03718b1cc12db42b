"""Model parameters and configuration-file handling.

All rates and detunings are expressed in units of the total cavity damping
rate kappa, and all times in units of 1/kappa.  kappa itself is therefore
fixed to 1 by convention, but kept as an explicit field so the unit system
is visible at every call site.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path


class ConfigError(ValueError):
    """Raised for malformed configuration files or invalid overrides."""


@dataclass(frozen=True)
class ModelParams:
    """Physical and numerical parameters of a simulation run.

    Rates in units of kappa, times in units of 1/kappa.  ``beta_in`` is the
    real, non-negative drive amplitude; the incident photon flux is exactly
    ``phi = beta_in**2``.
    """

    kappa: float = 1.0            # total cavity damping rate (unit)
    kappa_c: float = 0.8          # input-port damping rate
    gamma: float = 0.005          # intrinsic spin relaxation rate
    delta_c: float = 0.0          # cavity-laser detuning
    beta_in: float = 0.1          # drive amplitude, phi = beta_in**2
    delta_inh: float = 5.0        # inhomogeneous FWHM of ion detunings
    g_mean: float = 0.07          # mean ion-cavity coupling
    g_std: float = 0.007          # coupling standard deviation (0.1 * g_mean)
    n_ions: int = 61              # ensemble size
    n_traj: int = 120             # number of disorder realizations
    t_pulse: float = 1000.0       # excitation pulse duration
    t_decay: float = 400.0        # fluorescence observation window
    master_seed: int = 12345      # root of the splittable seed scheme
    # numerical knobs (documented defaults, all configurable)
    tail_cut: float = 10.0        # resample detunings with |delta| > tail_cut * delta_inh
    fit_window_start: float = 30.0  # decay-fit window starts here (excludes ringdown)
    samples_per_kappa: float = 2.0  # fluorescence sampling density
    rtol: float = 1e-8            # integrator relative tolerance
    atol: float = 1e-10           # integrator absolute tolerance

    def __post_init__(self):
        if not (0.0 < self.kappa_c <= self.kappa):
            raise ValueError(f"require 0 < kappa_c <= kappa, got kappa_c={self.kappa_c}")
        if self.gamma <= 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.delta_inh <= 0.0:
            raise ValueError(f"delta_inh must be positive, got {self.delta_inh}")
        if self.g_mean <= 0.0:
            raise ValueError(f"g_mean must be positive, got {self.g_mean}")
        if self.g_std < 0.0:
            raise ValueError(f"g_std must be non-negative, got {self.g_std}")
        if self.n_ions < 1:
            raise ValueError(f"n_ions must be >= 1, got {self.n_ions}")
        if self.n_traj < 1:
            raise ValueError(f"n_traj must be >= 1, got {self.n_traj}")
        if self.beta_in < 0.0:
            raise ValueError(f"beta_in must be non-negative, got {self.beta_in}")
        if self.t_pulse < 0.0 or self.t_decay <= 0.0:
            raise ValueError("t_pulse must be >= 0 and t_decay > 0")

    @property
    def phi(self) -> float:
        """Incident photon flux, exactly beta_in squared."""
        return self.beta_in**2

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        try:
            return cls(**data)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> ModelParams:
    """Read a JSON configuration file into ModelParams.

    Missing keys fall back to defaults; unknown keys are rejected with a
    diagnostic naming them.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return ModelParams.from_dict(data)


def save_config(params: ModelParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params.to_dict(), indent=2) + "\n")


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ModelParams)}


def apply_overrides(params: ModelParams, overrides: list[str]) -> ModelParams:
    """Apply ``key=value`` override strings to a parameter set.

    Only documented ModelParams keys are accepted; anything else raises
    ConfigError rather than being silently ignored.
    """
    changes: dict = {}
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must have the form key=value, got {item!r}")
        key, _, raw = item.partition("=")
        key = key.strip()
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown configuration key in override: {key!r}")
        caster = int if _FIELD_TYPES[key] == "int" else float
        try:
            changes[key] = caster(raw)
        except ValueError as exc:
            raise ConfigError(f"override {key}: cannot parse {raw!r}") from exc
    try:
        return params.replace(**changes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
