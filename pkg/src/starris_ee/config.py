"""Flat key/value configuration files (YAML syntax, SI units, dB fields end in ``_db``)."""

from __future__ import annotations

from dataclasses import fields

import yaml

from .channel import Dimensions, LinkClass, ScenarioConfig, default_user_positions
from .harness import RunParams

_LINK_KEYS = {LinkClass.DIRECT: "direct", LinkClass.BS_RIS: "bs_ris", LinkClass.RIS_USER: "ris_user"}

SCENARIO_DEFAULTS = {
    "n_bs": 2,
    "n_u": 2,
    "n_users": 6,
    "n_ris": 60,
    "n_streams": None,
    "bs_x": 0.0,
    "bs_y": 0.0,
    "ris_x": 50.0,
    "ris_y": 10.0,
    "user_positions": None,
    "layout_seed": 0,
    "ricean_factor": 3.0,
    "pathloss_exponent_direct": 3.75,
    "pathloss_exponent_bs_ris": 2.2,
    "pathloss_exponent_ris_user": 2.2,
    "pathloss_ref_direct_db": 30.0,
    "pathloss_ref_bs_ris_db": 30.0,
    "pathloss_ref_ris_user_db": 30.0,
    "noise_power": 10 ** ((-94.0 - 30.0) / 10),
    "antenna_gain_db": 0.0,
    "blockage_db": 0.0,
}

RUN_DEFAULTS = {f.name: f.default for f in fields(RunParams)}

SWEEP_DEFAULTS = {"n_trials": 50, "base_seed": 0, "workers": 1}

DEFAULTS = {**SCENARIO_DEFAULTS, **RUN_DEFAULTS, **SWEEP_DEFAULTS}


class ConfigError(ValueError):
    pass


def merge(base: dict, overrides: dict):
    unknown = sorted(set(overrides) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    out = dict(base)
    out.update(overrides)
    return out


def load_config(path=None):
    """Defaults overlaid with the keys found in ``path`` (if given)."""
    cfg = dict(DEFAULTS)
    if path is None:
        return cfg
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a flat mapping of keys to values")
    return merge(cfg, data)


def dump_config(cfg: dict | None = None):
    return yaml.safe_dump(dict(cfg or DEFAULTS), sort_keys=False, default_flow_style=False)


def build_scenario(cfg: dict):
    dims = Dimensions(int(cfg["n_bs"]), int(cfg["n_u"]), int(cfg["n_users"]), int(cfg["n_ris"]),
                      None if cfg["n_streams"] is None else int(cfg["n_streams"]))
    ris = (float(cfg["ris_x"]), float(cfg["ris_y"]))
    users = cfg["user_positions"]
    if users is None:
        users = default_user_positions(dims.n_users, ris_position=ris,
                                       layout_seed=int(cfg["layout_seed"]))
    return ScenarioConfig(
        dims=dims,
        bs_position=(float(cfg["bs_x"]), float(cfg["bs_y"])),
        ris_position=ris,
        user_positions=tuple(tuple(p) for p in users),
        ricean_factor=float(cfg["ricean_factor"]),
        pathloss_exponents={c: float(cfg[f"pathloss_exponent_{n}"]) for c, n in _LINK_KEYS.items()},
        pathloss_ref_db={c: float(cfg[f"pathloss_ref_{n}_db"]) for c, n in _LINK_KEYS.items()},
        noise_power=float(cfg["noise_power"]),
        antenna_gain_db=float(cfg["antenna_gain_db"]),
        blockage_db=float(cfg["blockage_db"]),
    )


def build_params(cfg: dict):
    return RunParams(**{k: cfg[k] for k in RUN_DEFAULTS})
