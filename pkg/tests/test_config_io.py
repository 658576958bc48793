import numpy as np
import pytest

from thinfilm.config import ConfigError, load_config
from thinfilm.fieldio import read_field, write_field


def test_overrides_parse_values(tmp_path):
    cfg = load_config(overrides=["gl.lambda=2.5", "sweep.epsilons=[0.1, 0.05, 0.02]", "init.family=normal_perturbed"])
    assert cfg["gl"]["lambda"] == 2.5
    assert cfg["sweep"]["epsilons"] == [0.1, 0.05, 0.02]
    assert cfg["init"]["family"] == "normal_perturbed"


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(overrides=["gl.mu=1"])
    with pytest.raises(ConfigError):
        load_config(overrides=["gl=1"])
    with pytest.raises(ConfigError):
        load_config(overrides=["novalue"])
    p = tmp_path / "c.toml"
    p.write_text("[grid]\nm_phi = 3\n")
    with pytest.raises(ConfigError):
        load_config(p)
    p.write_text("[grid\n")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_file_merges_with_defaults(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('[geometry]\nfamily = "ellipse"\nparams = [1.5, 1.0]\n[time]\nT = 0.25\n')
    cfg = load_config(p)
    assert cfg["geometry"]["family"] == "ellipse" and cfg["time"]["T"] == 0.25
    assert cfg["time"]["dt"] == 1e-3


@pytest.mark.parametrize("shape", [(8, 2), (8, 3, 2)])
def test_field_roundtrip_lossless(tmp_path, shape):
    u = np.random.default_rng(0).standard_normal(shape) * 1e-7 + np.pi
    write_field(tmp_path / "f.csv", u)
    back = read_field(tmp_path / "f.csv")
    assert np.array_equal(back, u)


def test_surface_field_sigma_index(tmp_path):
    write_field(tmp_path / "f.csv", np.zeros((2, 1)))
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "theta_index,sigma_index,component,value"
    assert lines[1].split(",")[1] == "-1"
