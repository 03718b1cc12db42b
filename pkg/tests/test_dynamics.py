import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from spincav import ModelParams
from spincav.analytics import steady_state_self_consistent
from spincav.dynamics import (FluorescenceTrace, SystemState, fluorescence_full,
                              fluorescence_local, gamma_eff, gamma_eff_array,
                              ground_state, integrate, output_flux, rhs_full,
                              rhs_local, run_decay, run_pulse, trajectory_flux)
from spincav.disorder import IonParams

from conftest import empty_realization, make_realization, single_ion


def random_state(rng, n):
    """A state strictly inside the Bloch ball with a small cavity field."""
    s_z = rng.uniform(-1.0, 0.0, n)
    radius = np.sqrt(1.0 - s_z**2) / 2.0
    phase = rng.uniform(0, 2 * np.pi, n)
    s_minus = 0.9 * radius * np.exp(1j * phase)
    return SystemState(a=complex(rng.normal(), rng.normal()) * 0.1,
                       s_minus=s_minus, s_z=s_z)


# ---------------------------------------------------------------------------
# right-hand sides

def test_ground_state_is_fixed_point_of_both_models():
    real = make_realization([0.3, -1.2, 0.0], [0.07, 0.05, 0.09])
    p = ModelParams()
    state = ground_state(3)
    for rhs in (lambda s: rhs_full(s, real, p, drive_on=False),
                lambda s: rhs_local(s, real, p)):
        d = rhs(state)
        assert d.a == 0.0
        np.testing.assert_array_equal(d.s_minus, np.zeros(3, dtype=complex))
        np.testing.assert_array_equal(d.s_z, np.zeros(3))


def test_drive_on_vacuum_derivative():
    real = single_ion()
    p = ModelParams(beta_in=0.4)
    d = rhs_full(ground_state(1), real, p, drive_on=True)
    assert d.a == pytest.approx(-np.sqrt(p.kappa_c) * p.beta_in)
    np.testing.assert_array_equal(d.s_minus, np.zeros(1, dtype=complex))
    np.testing.assert_array_equal(d.s_z, np.zeros(1))


def test_sz_derivative_is_real():
    # the complex expression 2i g (a* s_- - a s_-*) is real by construction
    rng = np.random.default_rng(7)
    real = make_realization(rng.normal(size=5), rng.uniform(0.01, 0.1, 5))
    state = random_state(rng, 5)
    complex_dsz = 2j * real.gs * (np.conj(state.a) * state.s_minus
                                  - state.a * np.conj(state.s_minus))
    assert np.max(np.abs(complex_dsz.imag)) < 1e-12
    d = rhs_full(state, real, ModelParams(), drive_on=True)
    assert d.s_z.dtype == np.float64


def test_rhs_dimension_mismatch():
    with pytest.raises(ValueError):
        rhs_full(ground_state(2), single_ion(), ModelParams(), True)


# ---------------------------------------------------------------------------
# integration

def test_fixed_point_stays_constant():
    real = make_realization([0.5, 0.0], [0.07, 0.07])
    p = ModelParams()
    grid = np.linspace(0.0, 50.0, 11)
    traj = integrate(ground_state(2), real, p, (0.0, 50.0), drive_on=False,
                     sample_grid=grid)
    assert np.max(np.abs(traj.ys - traj.ys[0])) <= p.atol


def test_empty_cavity_charging_closed_form():
    # da/dt = -kappa/2 a - sqrt(kappa_c) beta  =>  a(t) = a_ss (1 - e^{-kappa t/2})
    p = ModelParams(beta_in=0.3, delta_c=0.0)
    grid = np.linspace(0.0, 20.0, 41)
    traj = integrate(SystemState(0.0j, np.zeros(0, dtype=complex), np.zeros(0)),
                     empty_realization(), p, (0.0, 20.0), drive_on=True,
                     sample_grid=grid)
    expected = (-2.0 * np.sqrt(p.kappa_c) * p.beta_in / p.kappa
                * (1.0 - np.exp(-p.kappa * grid / 2.0)))
    assert np.max(np.abs(traj.a - expected)) < 1e-7


def test_bare_cavity_decay():
    a0 = 0.7 - 0.2j
    p = ModelParams()
    grid = np.linspace(0.0, 30.0, 61)
    traj = integrate(SystemState(a0, np.zeros(0, dtype=complex), np.zeros(0)),
                     empty_realization(), p, (0.0, 30.0), drive_on=False,
                     sample_grid=grid)
    expected = abs(a0) ** 2 * np.exp(-p.kappa * grid)
    assert np.max(np.abs(np.abs(traj.a) ** 2 - expected)) < 1e-7


def test_tolerance_halving_convergence():
    real = single_ion(delta=0.4, g=0.07)
    p = ModelParams(beta_in=0.5)
    span = (0.0, 200.0)

    def final(params):
        traj = integrate(ground_state(1), real, params, span, drive_on=True,
                         sample_grid=np.array([span[1]]))
        return traj.ys[0]

    y_default = final(p)
    y_tight = final(p.replace(rtol=p.rtol / 2.0, atol=p.atol / 2.0))
    scale = p.atol + p.rtol * np.max(np.abs(y_default))
    assert np.max(np.abs(y_default - y_tight)) < 10.0 * scale


def test_sample_grid_outside_span_rejected():
    with pytest.raises(ValueError):
        integrate(ground_state(1), single_ion(), ModelParams(),
                  (0.0, 1.0), True, sample_grid=np.array([0.0, 2.0]))


# ---------------------------------------------------------------------------
# pulse / decay protocol

def test_run_pulse_no_drive_returns_initial():
    state = run_pulse(single_ion(), ModelParams(beta_in=0.0))
    assert state.a == 0.0
    np.testing.assert_array_equal(state.s_z, [-1.0])


def test_run_pulse_reaches_self_consistent_steady_state():
    # single resonant ion: the late-time pulse state is the fixed point of
    # the self-consistency equations (slowest relaxation rate ~ gamma/2)
    real = single_ion()
    p = ModelParams(beta_in=0.5, t_pulse=8000.0)
    ss = steady_state_self_consistent(real, p)
    assert ss.converged
    end = run_pulse(real, p)
    assert abs(end.a - ss.a_ss) < 1e-6
    assert abs(end.s_z[0] - ss.s_z_ss[0]) < 1e-6
    assert abs(end.s_minus[0] - ss.s_minus_ss[0]) < 1e-6


def test_strong_drive_depolarizes_resonant_ion():
    end = run_pulse(single_ion(), ModelParams(beta_in=20.0, t_pulse=2000.0))
    # asymptote is 0 from below; allow integrator-tolerance overshoot
    assert -0.05 < end.s_z[0] < 1e-5


def test_decay_from_ground_state_is_dark():
    p = ModelParams(t_decay=50.0)
    real = single_ion()
    traj = run_decay(real, ground_state(1), p)
    flux = trajectory_flux(traj, real, p, model="full")
    assert np.max(flux) == 0.0


def test_energy_bookkeeping_during_decay():
    # kappa int|a|^2 + gamma sum int (1+s_z)/2 == initial stored excitation
    real = make_realization([0.0, 0.4, -0.9], [0.07, 0.06, 0.08])
    p = ModelParams(gamma=0.05, beta_in=2.0, t_pulse=300.0, t_decay=400.0,
                    samples_per_kappa=20.0)
    end = run_pulse(real, p)
    traj = run_decay(real, end, p)
    initial = abs(end.a) ** 2 + np.sum(1.0 + end.s_z) / 2.0
    emitted = (p.kappa * np.trapezoid(np.abs(traj.a) ** 2, traj.times)
               + p.gamma * np.trapezoid(np.sum(1.0 + traj.s_z, axis=1) / 2.0,
                                    traj.times))
    residual = abs(traj.a[-1]) ** 2 + np.sum(1.0 + traj.s_z[-1]) / 2.0
    assert emitted + residual == pytest.approx(initial, rel=0.01)


def test_linear_regime_matches_matrix_exponential():
    # weak drive, one ion: with s_z pinned at -1 the decay is linear and the
    # (a, s_-) pair evolves under a 2x2 complex matrix
    real = single_ion(delta=0.3, g=0.07)
    p = ModelParams(beta_in=0.001, t_pulse=1000.0, t_decay=100.0,
                    samples_per_kappa=4.0)
    end = run_pulse(real, p)
    assert 1.0 + end.s_z[0] < 1e-3
    traj = run_decay(real, end, p)
    m = np.array([[-(1j * p.delta_c + p.kappa / 2.0), -1j * real.gs[0]],
                  [-1j * real.gs[0], -(1j * real.deltas[0] + p.gamma / 2.0)]])
    v0 = np.array([end.a, end.s_minus[0]])
    predicted = np.array([(expm(m * t) @ v0)[0] for t in traj.times])
    scale = np.max(np.abs(traj.a))
    assert np.max(np.abs(traj.a - predicted)) < 0.01 * scale


# ---------------------------------------------------------------------------
# observables

def test_output_flux_values():
    p = ModelParams(beta_in=0.4)
    n0 = SystemState(0.0j, np.zeros(0, dtype=complex), np.zeros(0))
    assert output_flux(n0, p, drive_on=False) == 0.0
    s = SystemState(0.5 + 0.1j, np.zeros(0, dtype=complex), np.zeros(0))
    assert output_flux(s, p, drive_on=False) == pytest.approx(
        p.kappa_c * abs(0.5 + 0.1j) ** 2)
    # empty-cavity steady state under drive: destructive interference term
    a_ss = -2.0 * np.sqrt(p.kappa_c) * p.beta_in / p.kappa
    s = SystemState(a_ss + 0.0j, np.zeros(0, dtype=complex), np.zeros(0))
    assert output_flux(s, p, drive_on=True) == pytest.approx(
        p.beta_in**2 * (1.0 - 2.0 * p.kappa_c / p.kappa) ** 2)


def test_fluorescence_full_single_realization():
    real = single_ion()
    p = ModelParams(beta_in=0.5, t_pulse=100.0, t_decay=50.0)
    trace = fluorescence_full([real], p)
    assert trace.n_traj == 1
    end = run_pulse(real, p)
    traj = run_decay(real, end, p)
    np.testing.assert_allclose(trace.flux, p.kappa_c * np.abs(traj.a) ** 2)


def test_fluorescence_full_averaging_idempotence():
    real = single_ion()
    p = ModelParams(beta_in=0.5, t_pulse=100.0, t_decay=50.0)
    one = fluorescence_full([real], p)
    four = fluorescence_full([real] * 4, p)
    np.testing.assert_allclose(four.flux, one.flux)
    assert four.n_traj == 4


def test_fluorescence_full_dark_without_drive():
    p = ModelParams(beta_in=0.0, t_decay=20.0)
    trace = fluorescence_full([single_ion()], p)
    assert np.max(trace.flux) == 0.0


def test_fluorescence_trace_csv_round_trip(tmp_path):
    trace = FluorescenceTrace(times=np.linspace(0, 5, 11),
                              flux=np.linspace(1, 0, 11) ** 2, n_traj=7)
    path = tmp_path / "trace.csv"
    trace.export_csv(path)
    back = FluorescenceTrace.from_csv(path)
    np.testing.assert_array_equal(back.times, trace.times)
    np.testing.assert_array_equal(back.flux, trace.flux)
    assert back.n_traj == 7


# ---------------------------------------------------------------------------
# effective local model

def test_gamma_eff_values():
    p = ModelParams()
    assert gamma_eff(IonParams(0.3, 0.0), p) == pytest.approx(p.gamma)
    # resonant: gamma + 4 g^2 / kappa
    assert gamma_eff(IonParams(0.0, 0.07), p) == pytest.approx(0.0246)
    # half-kappa detuned: gamma + kappa g^2 / (kappa^2/4 + kappa^2/4)
    assert gamma_eff(IonParams(0.5, 0.07), p) == pytest.approx(
        0.005 + 0.0049 / 0.5)
    real = make_realization([0.0, 0.5], [0.07, 0.07])
    np.testing.assert_allclose(gamma_eff_array(real, p),
                               [0.0246, 0.005 + 0.0049 / 0.5])


def test_local_cavity_rings_down_independently():
    real = single_ion()
    p = ModelParams(delta_c=0.7)
    a0 = 0.4 + 0.3j
    state = SystemState(a0, np.zeros(1, dtype=complex), np.full(1, -0.2))
    grid = np.linspace(0.0, 30.0, 61)
    traj = integrate(state, real, p, (0.0, 30.0), drive_on=False,
                     sample_grid=grid, model="local")
    expected = a0 * np.exp(-(1j * p.delta_c + p.kappa / 2.0) * grid)
    assert np.max(np.abs(traj.a - expected)) < 1e-7


def test_local_spin_relaxes_at_gamma_eff():
    real = make_realization([0.0, 1.3], [0.07, 0.05])
    p = ModelParams()
    state = SystemState(0.0j, np.zeros(2, dtype=complex), np.array([0.0, -0.3]))
    grid = np.linspace(0.0, 100.0, 201)
    traj = integrate(state, real, p, (0.0, 100.0), drive_on=False,
                     sample_grid=grid, model="local")
    geff = gamma_eff_array(real, p)
    for j in range(2):
        expected = -1.0 + (1.0 + state.s_z[j]) * np.exp(-geff[j] * grid)
        assert np.max(np.abs(traj.s_z[:, j] - expected)) < 1e-7


def test_local_resonant_half_life():
    # s_z(0) = 0, a = 0: excitation halves after ln2 / 0.0246
    real = single_ion()
    p = ModelParams()
    t_half = np.log(2.0) / 0.0246
    state = SystemState(0.0j, np.zeros(1, dtype=complex), np.zeros(1))
    traj = integrate(state, real, p, (0.0, 2 * t_half), drive_on=False,
                     sample_grid=np.array([0.0, t_half]), model="local")
    assert 1.0 + traj.s_z[-1, 0] == pytest.approx(0.5, abs=1e-6)


def test_local_flux_ground_state_dark():
    real = single_ion()
    p = ModelParams()
    traj = run_decay(real, ground_state(1), p, model="local")
    assert np.max(trajectory_flux(traj, real, p, model="local")) == 0.0


def test_local_flux_decoupled_excited_ion():
    # g = 0: the emitted term reduces to gamma e^{-gamma t}
    real = make_realization([0.0], [0.0])
    p = ModelParams(gamma=0.05, t_decay=100.0)
    state = SystemState(0.0j, np.zeros(1, dtype=complex), np.ones(1))
    traj = run_decay(real, state, p, model="local")
    flux = trajectory_flux(traj, real, p, model="local")
    expected = p.gamma * np.exp(-p.gamma * traj.times)
    np.testing.assert_allclose(flux, expected, atol=1e-8)


def test_local_flux_additivity():
    p = ModelParams(gamma=0.05, t_decay=100.0)
    one = make_realization([0.0], [0.0])
    state1 = SystemState(0.0j, np.zeros(1, dtype=complex), np.zeros(1))
    traj1 = run_decay(one, state1, p, model="local")
    flux1 = trajectory_flux(traj1, one, p, model="local")
    five = make_realization([0.0] * 5, [0.0] * 5)
    state5 = SystemState(0.0j, np.zeros(5, dtype=complex), np.zeros(5))
    traj5 = run_decay(five, state5, p, model="local")
    flux5 = trajectory_flux(traj5, five, p, model="local")
    np.testing.assert_allclose(flux5, 5.0 * flux1, atol=1e-8)


def test_fluorescence_local_average():
    real = single_ion()
    p = ModelParams(beta_in=0.5, t_pulse=100.0, t_decay=50.0)
    end = run_pulse(real, p)
    traj = run_decay(real, end, p, model="local")
    trace = fluorescence_local([traj], [real], p)
    np.testing.assert_allclose(trace.flux,
                               trajectory_flux(traj, real, p, model="local"))


# ---------------------------------------------------------------------------
# invariants

@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_bloch_containment_and_monotone_energy(seed):
    rng = np.random.default_rng(seed)
    n = 3
    real = make_realization(rng.standard_cauchy(n) * 2.5,
                            rng.uniform(0.03, 0.1, n))
    p = ModelParams(beta_in=float(rng.uniform(0.1, 8.0)), t_pulse=200.0,
                    t_decay=100.0, samples_per_kappa=4.0)
    end = run_pulse(real, p)
    for model in ("full", "local"):
        traj = run_decay(real, end, p, model=model)
        ball = 4.0 * np.abs(traj.s_minus) ** 2 + traj.s_z**2
        assert np.max(ball) <= 1.0 + 1e-6
        if model == "full":
            energy = (np.abs(traj.a) ** 2
                      + np.sum(1.0 + traj.s_z, axis=1) / 2.0)
            assert np.all(np.diff(energy) <= 1e-8)
