"""Semiclassical simulation and fitting toolkit for driven, inhomogeneously
broadened spin ensembles coupled to a lossy cavity."""

__version__ = "0.1.0"

from .params import ModelParams, load_config, save_config  # noqa: F401
from .disorder import (DisorderRealization, IonParams, gaussian_pdf,  # noqa: F401
                       lorentzian_pdf, sample_disorder, sample_ensemble)
from .dynamics import (FluorescenceTrace, SystemState, Trajectory,  # noqa: F401
                       fluorescence_full, fluorescence_local, gamma_eff,
                       ground_state, integrate, output_flux, rhs_full,
                       rhs_local, run_decay, run_pulse)
from .analytics import (CooperativityReport, SteadyState,  # noqa: F401
                        SurvivalHistogram, bin_survival, cooperativities,
                        disorder_averaged_field, single_spin_steady_state,
                        steady_state_self_consistent)
from .oracle import OracleResult, quantum_oracle  # noqa: F401
from .fitting import (ExperimentalDataset, FitResult, fit_double_lorentzian,  # noqa: F401
                      fit_exponential, fit_lorentzian_single,
                      fit_ple_saturation, fit_stretched_composite,
                      least_squares)
from .sweep import (SweepPlan, SweepResult, compare_models, default_plan,  # noqa: F401
                    persist_run, plan_from_manifest, run_detuning_sweep,
                    run_point, run_saturation_curve, run_survival)
