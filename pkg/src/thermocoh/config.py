"""Experiment configuration: TOML file, then command-line overrides."""

from __future__ import annotations

import copy
import hashlib
import json
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXPERIMENTS = ("pair-coherence", "dipole-effect", "scaling", "harvest", "couplings")

DEFAULTS = {
    "pair-coherence": {"model": {"nbar": [0.5, 1.0, 10.0], "f0": 0.0},
                       "time": {"t_max": 5.0, "n_points": 101}},
    "dipole-effect": {"model": {"nbar": 10.0, "f0": [0.0, 1.0, 100.0]},
                      "time": {"t_max": 5.0, "n_points": 501}},
    "scaling": {"model": {"nbar": 10.0, "f0": 1.0},
                "scaling": {"n_min": 2, "n_max": 7, "conv_tol": 1e-8}},
    "harvest": {"collision": {"p": 1.0, "g": 1.0, "tau": 0.05, "omega0": 1.0,
                              "collisions": 10_000, "seeds": 32}},
    "couplings": {"geometry": {"preset": "pair-sweep"}},
}

# keys that do not change results and stay out of the config hash
_VOLATILE = ("out", "workers", "config_path")


class ConfigError(ValueError):
    pass


def deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_file(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc


def resolve(experiment: str, file_cfg: dict | None = None,
            overrides: dict | None = None) -> dict:
    """Defaults < config file < overrides."""
    file_cfg = file_cfg or {}
    if file_cfg.get("experiment", experiment) != experiment:
        raise ConfigError(f"config file is for {file_cfg['experiment']!r}, "
                          f"not {experiment!r}")
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    cfg = deep_merge({"experiment": experiment, "seed": 0, "workers": 1},
                     DEFAULTS[experiment])
    cfg = deep_merge(cfg, file_cfg)
    cfg = deep_merge(cfg, overrides or {})
    if int(cfg["workers"]) < 1:
        raise ConfigError("workers must be >= 1")
    return cfg


def config_hash(cfg: dict) -> str:
    stable = {k: v for k, v in cfg.items() if k not in _VOLATILE}
    blob = json.dumps(stable, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()
