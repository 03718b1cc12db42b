import numpy as np
import pytest

from spincav import ModelParams, quantum_oracle
from spincav.dynamics import ground_state, integrate
from spincav.oracle import MAX_ORACLE_IONS, TruncationError

from conftest import empty_realization, make_realization, single_ion


def test_no_drive_ground_state_is_stationary():
    p = ModelParams(beta_in=0.0)
    grid = np.linspace(0.0, 50.0, 11)
    res = quantum_oracle(p, single_ion(), fock_cutoff=3, t_span=(0.0, 50.0),
                         sample_times=grid, drive_on=True)
    assert np.max(np.abs(res.a)) < 1e-10
    assert np.max(np.abs(res.sigma_z + 1.0)) < 1e-10
    assert np.max(np.abs(res.sigma_minus)) < 1e-10


def test_empty_cavity_matches_classical_response():
    # the driven linear cavity is a coherent state: <a> is exactly classical
    p = ModelParams(beta_in=0.1, delta_c=0.3)
    grid = np.linspace(0.0, 30.0, 31)
    res = quantum_oracle(p, empty_realization(), fock_cutoff=5,
                         t_span=(0.0, 30.0), sample_times=grid)
    rate = 1j * p.delta_c + p.kappa / 2.0
    drive = np.sqrt(p.kappa_c) * p.beta_in
    expected = -drive / rate * (1.0 - np.exp(-rate * grid))
    assert np.max(np.abs(res.a - expected)) < 1e-6


def test_density_operator_stays_physical():
    p = ModelParams(beta_in=0.2, gamma=0.1)
    grid = np.linspace(0.0, 100.0, 21)
    res = quantum_oracle(p, single_ion(), fock_cutoff=6, t_span=(0.0, 100.0),
                         sample_times=grid)
    assert res.trace_deviation < 1e-8
    assert res.min_eigenvalue > -1e-8


def test_truncation_error_raised():
    p = ModelParams(beta_in=1.0)
    with pytest.raises(TruncationError):
        quantum_oracle(p, single_ion(), fock_cutoff=1, t_span=(0.0, 50.0),
                       sample_times=np.linspace(0.0, 50.0, 11))


def test_size_and_cutoff_limits():
    three = make_realization([0.0, 0.1, -0.1], [0.07] * 3)
    p = ModelParams()
    with pytest.raises(ValueError):
        quantum_oracle(p, three, 4, (0.0, 1.0), [0.0, 1.0])
    assert MAX_ORACLE_IONS == 2
    with pytest.raises(ValueError):
        quantum_oracle(p, single_ion(), 0, (0.0, 1.0), [0.0, 1.0])


def test_cutoff_convergence():
    p = ModelParams(beta_in=0.1)
    grid = np.linspace(0.0, 100.0, 21)
    lo = quantum_oracle(p, single_ion(), 5, (0.0, 100.0), grid)
    hi = quantum_oracle(p, single_ion(), 7, (0.0, 100.0), grid)
    assert np.max(np.abs(lo.a - hi.a)) < 1e-8
    assert np.max(np.abs(lo.sigma_z - hi.sigma_z)) < 1e-8


def test_mean_field_agrees_when_spin_is_fast():
    # gamma comparable to the Purcell rate keeps the spin weakly excited and
    # nearly factorized, so the semiclassical equations track the exact
    # master equation closely
    p = ModelParams(beta_in=0.1, gamma=0.2, t_pulse=200.0)
    real = single_ion()
    grid = np.linspace(0.0, p.t_pulse, 81)
    exact = quantum_oracle(p, real, 8, (0.0, p.t_pulse), grid)
    mf = integrate(ground_state(1), real, p, (0.0, p.t_pulse), drive_on=True,
                   sample_grid=grid)
    a_scale = np.max(np.abs(exact.a))
    assert np.max(np.abs(exact.a - mf.a)) < 0.01 * a_scale
    assert np.max(np.abs(exact.sigma_z[:, 0] - mf.s_z[:, 0])) < 0.01 * 2.0


def test_two_ion_oracle_runs():
    p = ModelParams(beta_in=0.1, gamma=0.2)
    real = make_realization([0.0, 0.5], [0.07, 0.06])
    grid = np.linspace(0.0, 50.0, 11)
    res = quantum_oracle(p, real, 5, (0.0, 50.0), grid)
    assert res.sigma_z.shape == (11, 2)
    assert res.trace_deviation < 1e-8


def test_oracle_csv_export(tmp_path):
    p = ModelParams(beta_in=0.1)
    grid = np.linspace(0.0, 10.0, 6)
    res = quantum_oracle(p, single_ion(), 6, (0.0, 10.0), grid)
    path = tmp_path / "oracle.csv"
    res.export_csv(path)
    header = path.read_text().splitlines()[0]
    assert header.startswith("time_over_kappa,re_a,im_a,sigma_z_0")
