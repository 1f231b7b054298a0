"""Command-line entry point: calibrate, trajectory, sptc, gate, sweep."""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import physics
from .config import ConfigError, load_config
from .cram import NonConvergenceError, default_v_range, evaluate_gate, gate_study, tmr_sweep
from .llg import SimulationError, simulate_pulse, trial_generator
from .report import Manifest, fmt, write_json, write_rows
from .sptc import (CurveRangeError, auto_grid, normalized_steepness, pulse_polarity, run_sptc,
                   steepness, v50, width_confidence, write_complement_csv)

OUT_ENV = "CRAMSIM_OUT"
DEFAULT_OUT = "cramsim_out"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _out_dir(args, cfg) -> Path:
    out = args.out or cfg["output.dir"] or os.environ.get(OUT_ENV) or DEFAULT_OUT
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _overrides(args) -> dict:
    o = {
        "campaign.seed": args.seed,
        "campaign.trials": args.trials,
        "campaign.parallelism": args.parallelism,
        "device.xi": args.xi,
        "device.tmr_override": args.tmr,
    }
    if args.xi is not None:
        o["sweep.xi"] = [args.xi]
    if args.tmr is not None:
        o["sweep.tmr"] = [args.tmr]
    return o


def _log(msg: str) -> None:
    print(msg, flush=True)


# ---------------------------------------------------------------------------
# commands

def cmd_calibrate(cfg, out: Path, man: Manifest) -> None:
    dev = cfg.device.calibrated()
    v = np.round(np.linspace(0.0, 1.0, 11), 12)
    delta = physics.thermal_stability(dev, v)
    body = {
        "k_int0_J_per_m2": dev.k_int0,
        "demag_J_per_m3": physics.demag_energy_density(dev),
        "tsf_zero_bias": float(physics.thermal_stability(dev, 0.0)),
        "barrier_J": float(physics.barrier_from_fields(dev, 0.0)),
        "tmr_ratio_zero_bias": float(physics.tmr_ratio(dev)),
        "r_p_ohm": float(physics.resistance(dev, "P")),
        "r_ap_ohm": float(physics.resistance(dev, "AP")),
        "spin_polarization": physics.spin_polarization(dev),
        "tsf_vs_bias": [{"v_volts": float(a), "tsf": float(b)} for a, b in zip(v, delta)],
    }
    man.add(write_json(out / "calibration.json", body))
    _log(f"k_int0 = {fmt(dev.k_int0)} J/m^2   tsf(0) = {fmt(body['tsf_zero_bias'])}")


def cmd_trajectory(cfg, out: Path, man: Manifest) -> None:
    dev = cfg.device.calibrated()
    pulse = cfg.pulse
    state = cfg.initial_state
    pulse = pulse.with_amplitude(pulse_polarity(state) * abs(pulse.amplitude))
    traj = simulate_pulse(dev, pulse, state, trial_generator(cfg.seed, 0, 0, 0), record=True)
    path = out / "trajectory.csv"
    traj.to_csv(path)
    man.add(path)
    when = "-" if traj.switch_time is None else f"{fmt(traj.switch_time)} s"
    _log(f"switched = {traj.switched}   first crossing = {when}")


def _one_sptc(cfg, dev, tag: str, out: Path, man: Manifest) -> dict:
    camp = cfg.campaign
    state = cfg.initial_state
    grid = camp.v_grid
    if grid is None:
        grid = auto_grid(dev, camp.pulse, camp.seed, initial_state=state,
                         n_points=camp.n_points, parallelism=camp.parallelism)
    curve = run_sptc(dev, camp.pulse, grid, camp.n_trials, camp.seed,
                     parallelism=camp.parallelism, initial_state=state)
    man.add(_save(curve.to_csv, out / f"sptc{tag}.csv"))
    man.add(_save(lambda p: write_complement_csv(curve, p), out / f"complement{tag}.csv"))
    norm, half = width_confidence(curve, seed=camp.seed)
    row = {
        "tsf": dev.tsf_target,
        "v50_V": v50(curve),
        "width_10_90_V": steepness(curve),
        "normalized_width": normalized_steepness(curve),
        "normalized_width_ci_half": half,
    }
    _log(f"tsf={fmt(dev.tsf_target)}  V50={fmt(row['v50_V'])} V  "
         f"width={fmt(row['width_10_90_V'])} V  normalized={fmt(norm)} +/- {fmt(half)}")
    return row


def _save(writer, path: Path) -> Path:
    writer(path)
    return path


def cmd_sptc(cfg, out: Path, man: Manifest) -> None:
    base = cfg.device
    ladder = cfg["sptc.tsf_ladder"]
    if ladder is None:
        rows = [_one_sptc(cfg, base.calibrated(), "", out, man)]
    else:
        rows = [_one_sptc(cfg, base.replace(tsf_target=d).calibrated(), f"_tsf{d:g}", out, man)
                for d in ladder]
    man.add(write_json(out / "sptc_summary.json", rows))


def cmd_gate(cfg, out: Path, man: Manifest) -> None:
    gate = cfg.gate
    camp = cfg.campaign
    study = gate_study(cfg.device.calibrated(), gate, camp)
    man.add(_save(study.sptc.to_csv, out / "sptc.csv"))

    v_hi = camp.v_range[1] if camp.v_range else default_v_range(study.sptc)[1]
    rows = []
    for v in np.linspace(0.0, v_hi, cfg["gate.scan_points"]):
        rep = evaluate_gate(study.device, gate, study.sptc, v, camp.pulse.duration)
        for r in rep.rows:
            rows.append([fmt(v), r.label, fmt(r.v_out), fmt(r.p_switch), r.expected,
                         fmt(r.d_out)])
    man.add(write_rows(out / "gate.csv", ("v_logic_V", "combo", "v_out_V", "p_switch",
                                          "d_out_expect", "d_out_mean"), rows))
    rep = study.report
    summary = {
        "gate": gate.name,
        "v_logic_opt_V": rep.v_logic,
        "error_rate": rep.error_rate,
        "error_rate_worst": rep.error_rate_worst,
        "energy_J": rep.energy,
        "v50_V": v50(study.sptc),
        "combos": [{"combo": r.label, "v_out_V": r.v_out, "p_switch": r.p_switch,
                    "d_out_mean": r.d_out, "d_out_expect": r.expected} for r in rep.rows],
    }
    man.add(write_json(out / "gate_summary.json", summary))
    _log(f"{gate.name}: V_opt={fmt(rep.v_logic)} V  error={fmt(rep.error_rate)}  "
         f"worst={fmt(rep.error_rate_worst)}  energy={fmt(rep.energy)} J")


def cmd_sweep(cfg, out: Path, man: Manifest) -> None:
    tmr = cfg["sweep.tmr"]
    xi = [x / 1e15 for x in cfg["sweep.xi"]]

    def progress(i, n, row):
        _log(f"[{i + 1}/{n}] tmr={fmt(row.tmr_ratio)} xi={fmt(row.xi * 1e15)}  "
             f"V_opt={fmt(row.v_logic_opt)}  error={fmt(row.error_rate)}  "
             f"energy={fmt(row.energy)}")

    rows = tmr_sweep(cfg.device, cfg.gate, tmr, xi, cfg.campaign, progress=progress)
    man.add(write_rows(out / "sweep.csv", rows[0].CSV_HEADER, [r.csv_fields() for r in rows]))


COMMANDS = {
    "calibrate": (cmd_calibrate, "zero-bias anisotropy calibration and tsf(V) table"),
    "trajectory": (cmd_trajectory, "one recorded macrospin trajectory"),
    "sptc": (cmd_sptc, "switching-probability transfer curve (or a tsf ladder)"),
    "gate": (cmd_gate, "CRAM gate error scan and optimal logic voltage"),
    "sweep": (cmd_sweep, "optimised gate error and energy over TMR x xi"),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cramsim", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="INI or JSON config, or a previous run manifest")
        s.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./{DEFAULT_OUT})")
        s.add_argument("--seed", type=int)
        s.add_argument("--trials", type=int, help="Monte Carlo trials per grid voltage")
        s.add_argument("--xi", type=float, help="VCMA coefficient, fJ/(V m)")
        s.add_argument("--tmr", type=float, help="zero-bias TMR ratio override (2.0 = 200%%)")
        s.add_argument("--parallelism", "-j", type=int, help="worker processes, 0 = all cores")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fn = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config, _overrides(args))
        out = _out_dir(args, cfg)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    man = Manifest(out, args.command, cfg)
    t0 = time.time()
    try:
        fn(cfg, out, man)
    except (NonConvergenceError, CurveRangeError, SimulationError,
            FloatingPointError, physics.PhysicsError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        man.finish("failed")
        return EXIT_NUMERIC
    man.finish()
    _log(f"wrote {len(man.outputs)} file(s) to {out} in {time.time() - t0:.1f} s")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
