"""Shared fixtures and helpers for the test suite."""
import numpy as np
import pytest

from spincav import ModelParams
from spincav.disorder import DisorderRealization


def make_realization(deltas, gs) -> DisorderRealization:
    """Hand-built realization (bypasses sampling), e.g. for N = 0 cases."""
    return DisorderRealization(deltas=np.asarray(deltas, dtype=float),
                               gs=np.asarray(gs, dtype=float),
                               realization_seed=("manual",))


def empty_realization() -> DisorderRealization:
    """The empty ensemble: a bare cavity."""
    return make_realization([], [])


def single_ion(delta=0.0, g=0.07) -> DisorderRealization:
    return make_realization([delta], [g])


@pytest.fixture
def default_params() -> ModelParams:
    return ModelParams()


@pytest.fixture
def tiny_params() -> ModelParams:
    """Small, fast parameter set for pipeline plumbing tests."""
    return ModelParams(n_ions=3, n_traj=3, t_pulse=50.0, t_decay=60.0,
                       fit_window_start=10.0)
