import json

import pytest

from spincav import ModelParams, load_config, save_config
from spincav.params import ConfigError, apply_overrides


def test_defaults_are_valid():
    p = ModelParams()
    assert p.kappa == 1.0
    assert p.kappa_c == 0.8
    assert p.gamma == 0.005
    assert p.n_ions == 61
    assert p.n_traj == 120


def test_phi_is_beta_squared_exactly():
    p = ModelParams(beta_in=0.3)
    assert p.phi == 0.3**2
    assert ModelParams(beta_in=0.0).phi == 0.0


@pytest.mark.parametrize("changes", [
    {"kappa_c": 0.0}, {"kappa_c": 1.5}, {"gamma": 0.0}, {"gamma": -1.0},
    {"delta_inh": 0.0}, {"g_mean": 0.0}, {"g_std": -0.1},
    {"n_ions": 0}, {"n_traj": 0}, {"beta_in": -0.1}, {"t_decay": 0.0},
])
def test_invalid_parameters_rejected(changes):
    with pytest.raises(ValueError):
        ModelParams(**changes)


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="frobnicate"):
        ModelParams.from_dict({"frobnicate": 1.0})


def test_config_round_trip(tmp_path):
    p = ModelParams(beta_in=0.5, n_ions=7, master_seed=99)
    path = tmp_path / "config.json"
    save_config(p, path)
    assert load_config(path) == p


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="nope.json"):
        load_config(tmp_path / "nope.json")


def test_load_config_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="line"):
        load_config(path)


def test_load_config_partial_keys_use_defaults(tmp_path):
    path = tmp_path / "partial.json"
    path.write_text(json.dumps({"beta_in": 0.25}))
    p = load_config(path)
    assert p.beta_in == 0.25
    assert p.n_ions == ModelParams().n_ions


def test_apply_overrides():
    p = apply_overrides(ModelParams(), ["beta_in=0.2", "n_ions=5"])
    assert p.beta_in == 0.2
    assert p.n_ions == 5
    assert isinstance(p.n_ions, int)


@pytest.mark.parametrize("bad", [["oops"], ["nosuchkey=1"], ["gamma=abc"],
                                 ["gamma=-1"]])
def test_apply_overrides_rejects_bad_input(bad):
    with pytest.raises(ConfigError):
        apply_overrides(ModelParams(), bad)
