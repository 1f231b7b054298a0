"""Run manifests and CSV writers shared by the CLI commands."""

from __future__ import annotations

import csv
import hashlib
import json
import time
from pathlib import Path

from . import __version__
from .llg import SWITCH_THRESHOLD
from .sptc import TRIAL_BLOCK


def design_settings(cfg) -> dict:
    dev = cfg["device.thermal_sigma"]
    return {
        "units": "SI internally; config in device-table units",
        "demag_model": "thin film, N = (0, 0, 1)",
        "demag_energy": "mu0 Ms^2 t_f / 2",
        "ms_temperature_dependence": "none (Ms = Ms0)",
        "k_int0": "calibrated from tsf",
        "thermal_sigma_mode": "computed" if dev == "computed" else "pinned",
        "thermal_noise": "isotropic 3-component field, fresh per step",
        "integrator": "stochastic Heun, renormalised after corrector",
        "llg_prefactor": "(1 + alpha^2) / gamma",
        "switch_detection": f"m_z * s0 < {SWITCH_THRESHOLD} at end of relaxation",
        "conductance_model": "cosine interpolation between R_P and R_AP(v)",
        "stt_polarization": "P0 (1 - alpha_sp T^1.5), kept under tmr_override",
        "polarity": "positive amplitude lowers PMA and drives P -> AP",
        "alpha_sp": cfg["device.alpha_sp"],
        "v_0": cfg["device.v_0"],
        "rng": "Philox stream per (seed, stream, grid index, trial)",
        "trial_block": TRIAL_BLOCK,
        "curve_cleaning": "weighted isotonic regression, linear interpolation",
        "logic_convention": "0 = P, 1 = AP",
        "error_aggregation": "uniform mean over input combinations (worst also reported)",
        "energy_accounting": "logic line only, mean over combinations, pulse duration",
        "input_mtjs": "non-switching during the operation",
    }


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Manifest:
    """Written before any result file, then completed with checksums."""

    def __init__(self, out_dir: Path, command: str, cfg):
        self.path = Path(out_dir) / f"manifest_{command}.json"
        self.command = command
        self.cfg = cfg
        self.started = time.time()
        self.outputs: dict[str, str] = {}
        self._write(status="running")

    def add(self, path) -> Path:
        path = Path(path)
        self.outputs[path.name] = sha256(path)
        return path

    def finish(self, status: str = "complete") -> None:
        self._write(status=status)

    def _write(self, status: str) -> None:
        body = {
            "command": self.command,
            "tool_version": __version__,
            "status": status,
            "config": self.cfg.to_dict(),
            "design_decisions": design_settings(self.cfg),
            "started_unix": self.started,
            "wall_clock_s": round(time.time() - self.started, 3),
            "outputs": dict(sorted(self.outputs.items())),
        }
        self.path.write_text(json.dumps(body, indent=2, sort_keys=False) + "\n")


def fmt(x) -> str:
    return f"{x:.9g}"


def _rounded(obj):
    if isinstance(obj, float):
        return float(fmt(obj))
    if isinstance(obj, dict):
        return {k: _rounded(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_rounded(v) for v in obj]
    return obj


def write_json(path, obj) -> Path:
    """Result JSON; floats rounded to 9 significant digits."""
    Path(path).write_text(json.dumps(_rounded(obj), indent=2) + "\n")
    return Path(path)


def write_rows(path, header, rows) -> Path:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return Path(path)
