"""Run configuration: INI or JSON, device keys named after the device-parameter table.

Values are written in the table's units (nm, Ohm um^2, kA/m, fJ/(V m), mT, K)
and converted to SI here. Every key is optional except ``campaign.seed``.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

from .cram import Campaign, GateSpec, get_gate
from .llg import PulseSpec
from .physics import CONST, DeviceParams, PhysicsError


class ConfigError(ValueError):
    """Raised with a ``section.key: message`` text."""


def _float(x):
    return float(x)


def _opt_float(x):
    if x is None or (isinstance(x, str) and x.strip().lower() in ("", "none", "null")):
        return None
    return float(x)


def _floats(x):
    if isinstance(x, str):
        x = [p for p in x.replace(";", ",").split(",") if p.strip()]
    if isinstance(x, (int, float)):
        x = [x]
    return [float(v) for v in x]


def _opt_floats(x):
    if x is None or (isinstance(x, str) and x.strip().lower() in ("", "none", "null")):
        return None
    return _floats(x)


def _int(x):
    f = float(x)
    if f != int(f):
        raise ValueError(f"expected an integer, got {x!r}")
    return int(f)


def _opt_int(x):
    if x is None or (isinstance(x, str) and x.strip().lower() in ("", "none", "null")):
        return None
    return _int(x)


def _str(x):
    return str(x).strip()


def _opt_str(x):
    return None if x in (None, "") else str(x)


def _sigma(x):
    if isinstance(x, str) and x.strip().lower() == "computed":
        return "computed"
    return float(x)


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "device": {
        "l_x": (_float, 45.0),           # nm
        "l_y": (_float, 45.0),           # nm
        "t_f": (_float, 0.75),           # nm
        "t_ox": (_float, 1.0),           # nm
        "t_c": (_float, 1.5),            # nm, unused
        "ra_p": (_float, 5.0),           # Ohm um^2
        "m_s0": (_float, 950.0),         # kA/m
        "p_0": (_float, 0.54),
        "alpha": (_float, 0.02),
        "xi": (_float, 0.0),             # fJ / (V m)
        "tsf": (_float, 45.7),
        "h_ext": (_floats, [0.0, 0.0, 0.0]),  # mT
        "t": (_float, 300.0),            # K
        "alpha_sp": (_float, 2e-5),      # K^-1.5
        "v_0": (_float, 0.6),            # V
        "tmr_override": (_opt_float, None),
        "thermal_sigma": (_sigma, 4.5),  # mT, or "computed"
    },
    "pulse": {
        "amplitude_v": (_float, 0.8),
        "duration_ns": (_float, 1.0),
        "dt_ps": (_float, 1.0),
        "relax_ns": (_float, 2.0),
        "initial_state": (_str, "P"),
    },
    "campaign": {
        "seed": (_opt_int, None),
        "trials": (_int, 2000),
        "parallelism": (_int, 0),
        "grid_points": (_int, 41),
        "v_min": (_opt_float, None),
        "v_max": (_opt_float, None),
    },
    "sptc": {
        "tsf_ladder": (_opt_floats, None),
    },
    "gate": {
        "name": (_str, "NAND"),
        "v_logic_max": (_opt_float, None),
        "scan_points": (_int, 101),
    },
    "sweep": {
        "tmr": (_floats, [1.0, 1.5, 2.0, 2.5, 3.0]),
        "xi": (_floats, [0.0, 200.0]),   # fJ / (V m)
    },
    "output": {
        "dir": (_opt_str, None),
    },
}


@dataclass
class RunConfig:
    values: dict

    def __getitem__(self, key):
        section, name = key.split(".")
        return self.values[section][name]

    @property
    def seed(self) -> int:
        return self.values["campaign"]["seed"]

    @property
    def device(self) -> DeviceParams:
        return device_from_section(self.values["device"])

    @property
    def pulse(self) -> PulseSpec:
        p = self.values["pulse"]
        return PulseSpec(p["amplitude_v"], p["duration_ns"] / 1e9, p["dt_ps"] / 1e12,
                         p["relax_ns"] / 1e9)

    @property
    def initial_state(self) -> str:
        return self.values["pulse"]["initial_state"]

    @property
    def gate(self) -> GateSpec:
        return get_gate(self.values["gate"]["name"])

    def explicit_grid(self) -> Optional[tuple]:
        import numpy as np

        c = self.values["campaign"]
        if c["v_min"] is None or c["v_max"] is None:
            return None
        return tuple(np.linspace(c["v_min"], c["v_max"], c["grid_points"]).tolist())

    @property
    def campaign(self) -> Campaign:
        c = self.values["campaign"]
        v_max = self.values["gate"]["v_logic_max"]
        return Campaign(
            pulse=self.pulse,
            n_trials=c["trials"],
            seed=c["seed"],
            parallelism=c["parallelism"],
            n_points=c["grid_points"],
            v_grid=self.explicit_grid(),
            v_range=None if v_max is None else (0.0, v_max),
        )

    def to_dict(self) -> dict:
        return json.loads(json.dumps(self.values))


def device_from_section(d: dict) -> DeviceParams:
    sigma = d["thermal_sigma"]
    # divide by exact powers of ten so table values land on the SI literals
    return DeviceParams(
        lx=d["l_x"] / 1e9,
        ly=d["l_y"] / 1e9,
        t_f=d["t_f"] / 1e9,
        t_ox=d["t_ox"] / 1e9,
        t_c=d["t_c"] / 1e9,
        ra_p=d["ra_p"] / 1e12,
        ms0=d["m_s0"] * 1e3,
        p0=d["p_0"],
        alpha=d["alpha"],
        xi=d["xi"] / 1e15,
        tsf_target=d["tsf"],
        alpha_sp=d["alpha_sp"],
        v0=d["v_0"],
        h_ext=tuple(h / 1e3 / CONST.mu0 for h in d["h_ext"]),
        temperature=d["t"],
        tmr_override=d["tmr_override"],
        thermal_sigma=None if sigma == "computed" else sigma / 1e3,
    )


def _read_raw(path: Path) -> dict:
    text = path.read_text()
    if path.suffix.lower() == ".json" or text.lstrip().startswith("{"):
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if "config" in raw and isinstance(raw["config"], dict):
            raw = raw["config"]  # a run manifest
        return raw
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return {s: dict(parser.items(s)) for s in parser.sections()}


def build_config(raw: Optional[dict] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Validate ``raw`` against the schema, apply ``overrides`` ("section.key" -> value)."""
    raw = raw or {}
    values: dict[str, dict[str, Any]] = {}
    for section in raw:
        if section not in SCHEMA:
            raise ConfigError(f"{section}: unknown section")
        if not isinstance(raw[section], dict):
            raise ConfigError(f"{section}: expected a table of keys")
    for section, keys in SCHEMA.items():
        given = raw.get(section, {})
        for name in given:
            if name not in keys:
                raise ConfigError(f"{section}.{name}: unknown key")
        values[section] = {}
        for name, (parse, default) in keys.items():
            src = given.get(name, default)
            key = f"{section}.{name}"
            if overrides and key in overrides and overrides[key] is not None:
                src = overrides[key]
            try:
                values[section][name] = parse(src) if src is not None else None
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{key}: {exc}") from None

    cfg = RunConfig(values)
    _validate(cfg)
    return cfg


def load_config(path=None, overrides: Optional[dict] = None) -> RunConfig:
    raw = _read_raw(Path(path)) if path is not None else {}
    return build_config(raw, overrides)


def _validate(cfg: RunConfig) -> None:
    v = cfg.values
    if v["campaign"]["seed"] is None:
        raise ConfigError("campaign.seed: a seed is mandatory")
    if v["campaign"]["seed"] < 0:
        raise ConfigError("campaign.seed: must be a non-negative integer")
    if v["campaign"]["trials"] < 1:
        raise ConfigError("campaign.trials: must be >= 1")
    if v["campaign"]["parallelism"] < 0:
        raise ConfigError("campaign.parallelism: must be >= 0 (0 = all cores)")
    if v["campaign"]["grid_points"] < 2:
        raise ConfigError("campaign.grid_points: must be >= 2")
    c = v["campaign"]
    if (c["v_min"] is None) != (c["v_max"] is None):
        raise ConfigError("campaign.v_min: v_min and v_max must be given together")
    if c["v_min"] is not None and not 0 <= c["v_min"] < c["v_max"]:
        raise ConfigError("campaign.v_max: need 0 <= v_min < v_max")
    if v["pulse"]["initial_state"] not in ("P", "AP"):
        raise ConfigError("pulse.initial_state: must be P or AP")
    if len(v["device"]["h_ext"]) != 3:
        raise ConfigError("device.h_ext: must have three components")
    try:
        cfg.device
    except PhysicsError as exc:
        key = _device_key_for(str(exc))
        raise ConfigError(f"device.{key}: {exc}") from None
    try:
        cfg.pulse
    except ValueError as exc:
        raise ConfigError(f"pulse: {exc}") from None
    try:
        cfg.gate
    except ValueError as exc:
        raise ConfigError(f"gate.name: {exc}") from None
    if any(t <= 0 for t in v["sweep"]["tmr"]):
        raise ConfigError("sweep.tmr: TMR ratios must be positive")
    if v["sptc"]["tsf_ladder"] is not None and any(d <= 0 for d in v["sptc"]["tsf_ladder"]):
        raise ConfigError("sptc.tsf_ladder: values must be positive")


_SI_TO_KEY = {"lx": "l_x", "ly": "l_y", "ms0": "m_s0", "p0": "p_0", "tsf_target": "tsf",
              "temperature": "t", "v0": "v_0"}


def _device_key_for(msg: str) -> str:
    field_name = msg.split(" ", 1)[0]
    return _SI_TO_KEY.get(field_name, field_name)
