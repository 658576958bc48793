"""TOML run configuration with defaults and dotted ``key=value`` overrides."""
from __future__ import annotations

import copy
import sys
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    """Malformed or inconsistent configuration (CLI exit code 2)."""


DEFAULTS = {
    "seed": 0,
    "checks": ["surface_rate", "thin_rate", "lemma_rates"],
    "geometry": {"family": "circle", "params": [1.0]},
    "profile": {"g0": 0.0, "g1": [1.0, 0.3, 1]},
    "sweep": {"epsilons": [0.2, 0.1, 0.05, 0.025], "jobs": 1},
    "gl": {"lambda": 1.0, "components": 1, "reaction": True},
    "time": {"T": 0.5, "dt": 1e-3, "scheme": "imex_euler", "snapshots": 11},
    "grid": {"m_theta": 256, "m_sigma": 32, "ref_factor": 2},
    "solver": {"linear": "direct_banded", "cg_tol": 1e-10, "cg_max_iter": 2000},
    "surface": {"backend": "fd", "modes": 16, "weighted_basis": True},
    "init": {
        "family": "well_prepared",
        "params": [0.2, 0.5, 0.0, 0.0, 0.3],
        "beta": 1.0,
        "amplitude": 1.0,
        "c1": 1.0,
        "alpha": 1.0 / 3.0,
    },
    "solve": {"epsilon": 0.1},
}


def _merge(base: dict, upd: dict, prefix=""):
    for key, val in upd.items():
        name = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {name!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {name!r} must be a table")
            _merge(base[key], val, name + ".")
        else:
            base[key] = val


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(cfg: dict, item: str):
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, text = item.split("=", 1)
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if p not in node or not isinstance(node[p], dict):
            raise ConfigError(f"unknown config key {key!r}")
        node = node[p]
    if parts[-1] not in node or isinstance(node[parts[-1]], dict):
        raise ConfigError(f"unknown config key {key!r}")
    node[parts[-1]] = _parse_value(text.strip())


def load_config(path=None, overrides=()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            data = tomllib.loads(Path(path).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        _merge(cfg, data)
    for item in overrides:
        apply_override(cfg, item)
    return cfg
