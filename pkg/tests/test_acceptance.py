"""Acceptance criteria 1-12.

Each test records one PASS/FAIL line, printed together at the end of the
run. Expensive Monte Carlo campaigns are shared through module fixtures.
Campaigns use seed 0 and the library's automatic grid placement.
"""

import math
import time

import numpy as np
import pytest
from scipy import integrate, optimize, stats

from cramsim import cli, physics
from cramsim.cram import (GATES, Campaign, error_rate_interval, gate_study, solve_line,
                          tmr_sweep)
from cramsim.llg import PulseSpec, invert_initial_angle
from cramsim.physics import DeviceParams
from cramsim.sptc import (auto_grid, complement_curves, prob_at, run_sptc, steepness, v50,
                          width_confidence)

NAND = GATES["NAND"]
PULSE = PulseSpec(0.0, 1e-9, 1e-12, 2e-9)      # 3 ns horizon at 1 ps
CAMPAIGN = Campaign(pulse=PULSE, n_trials=2000, seed=0, parallelism=0, n_points=41)
XI_VCMA = 200e-15
TMR_GRID = (1.0, 1.5, 2.0, 2.5, 3.0)
SWEEP_BUDGET_S = 30 * 60

# reference values
REF_NAND_ERR = (0.2633, 0.1725)
REF_TMR2_ERR = (1.03e-1, 3.98e-2)


@pytest.fixture(scope="module")
def judge(verdicts):
    def record(number, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {detail}"
        verdicts.append(line)
        print(line)
        assert ok, line
    return record


# ---------------------------------------------------------------------------
# shared campaigns

@pytest.fixture(scope="module")
def default_studies():
    """NAND studies on the default device, without and with VCMA."""
    out = {}
    for xi in (0.0, XI_VCMA):
        out[xi] = gate_study(DeviceParams(xi=xi).calibrated(), NAND, CAMPAIGN)
    return out


@pytest.fixture(scope="module")
def tsf_ladder(default_studies):
    curves = {45.7: default_studies[0.0].sptc}
    for delta in (30.0, 60.0):
        dev = DeviceParams(tsf_target=delta).calibrated()
        grid = auto_grid(dev, PULSE, CAMPAIGN.seed, n_points=41)
        curves[delta] = run_sptc(dev, PULSE, grid, CAMPAIGN.n_trials, CAMPAIGN.seed,
                                 parallelism=CAMPAIGN.parallelism)
    return curves


@pytest.fixture(scope="module")
def sweep():
    t0 = time.perf_counter()
    rows = tmr_sweep(DeviceParams(), NAND, TMR_GRID, (0.0, XI_VCMA), CAMPAIGN)
    return rows, time.perf_counter() - t0


def _row(rows, tmr, xi):
    return next(r for r in rows if r.tmr_ratio == tmr and r.xi == xi)


# ---------------------------------------------------------------------------
# closed-form criteria

def test_c01_calibration_identity(judge):
    dev = DeviceParams().calibrated()
    delta = float(physics.thermal_stability(dev, 0.0))
    rel = abs(delta - 45.7) / 45.7
    judge(1, rel <= 1e-9, f"tsf(0) = {delta:.12g}, relative error {rel:.1e} (limit 1e-9)")


def test_c02_barrier_consistency(judge):
    dev = DeviceParams().calibrated()
    e_field = float(physics.barrier_from_fields(dev, 0.0))
    e_tsf = 45.7 * physics.CONST.k_b * dev.temperature
    rel = abs(e_field - e_tsf) / e_tsf
    ok = rel <= 1e-6 and abs(e_field - 1.893e-19) / 1.893e-19 < 1e-3
    judge(2, ok, f"field barrier {e_field:.6e} J vs tsf*kT {e_tsf:.6e} J, rel {rel:.1e}")


def test_c03_tmr_halving(judge):
    rng = np.random.default_rng(0)
    bad = 0
    for _ in range(100):
        dev = DeviceParams(p0=rng.uniform(0.05, 0.9), alpha_sp=rng.uniform(0, 3e-5),
                           v0=rng.uniform(0.05, 2.0), temperature=rng.uniform(1, 400))
        t = rng.uniform(0, 400)
        if physics.tmr_ratio(dev, t, dev.v0) != 0.5 * physics.tmr_ratio(dev, t, 0.0):
            bad += 1
    judge(3, bad == 0, f"{100 - bad}/100 random draws halve exactly at V0")


def test_c04_initial_angle_sampler(judge):
    delta = 45.7
    t0 = time.perf_counter()
    theta = invert_initial_angle(delta, np.random.default_rng(0).random(100_000))
    elapsed = time.perf_counter() - t0

    def dens(t):
        return np.sin(t) * np.exp(-delta * np.sin(t) ** 2)

    norm = integrate.quad(dens, 0, math.pi / 2)[0]

    def cdf(t):
        return integrate.quad(dens, 0, t)[0] / norm

    # 50 equiprobable bins located by root finding on the quadrature CDF
    q = np.linspace(0, 1, 51)[1:-1]
    edges = [0.0] + [optimize.brentq(lambda t, qq=qq: cdf(t) - qq, 0, math.pi / 2,
                                     xtol=1e-13) for qq in q] + [math.pi / 2]
    counts = np.histogram(theta, bins=edges)[0]
    p_value = stats.chisquare(counts).pvalue
    sin2_quad = integrate.quad(lambda t: np.sin(t) ** 2 * dens(t), 0, math.pi / 2)[0] / norm
    sin2_mc = float(np.mean(np.sin(theta) ** 2))
    rel = abs(sin2_mc - sin2_quad) / sin2_quad
    # the quoted ~0.0109 = 1/(2 tsf) is the per-axis transverse moment E[m_x^2]
    phi = 2 * math.pi * np.random.default_rng(1).random(theta.size)
    mx2 = float(np.mean((np.sin(theta) * np.cos(phi)) ** 2))
    ok = p_value > 0.01 and rel < 0.05 and elapsed < 10
    judge(4, ok, f"chi2 p = {p_value:.3f}; E[sin^2] {sin2_mc:.5f} vs quadrature "
                 f"{sin2_quad:.5f} ({100 * rel:.2f}%); E[m_x^2] {mx2:.5f} (quoted ~0.0109); "
                 f"sampling {elapsed:.2f} s")


def test_c10_divider_oracle(judge):
    """Line solution against a 1 uV brute-force scan of the node equation."""
    rng = np.random.default_rng(10)
    worst = 0.0
    for _ in range(50):
        name = rng.choice(sorted(GATES))
        gate = GATES[name]
        combo = gate.combos[rng.integers(len(gate.combos))]
        tmr, v0 = rng.uniform(0.5, 3.0), rng.uniform(0.2, 1.5)
        v_logic = rng.uniform(0.05, 3.0)
        dev = DeviceParams(tmr_override=tmr, v0=v0).calibrated()
        r_p = dev.ra_p / dev.area

        def r(bit, v):
            return r_p * (1 + bit * tmr / (1 + (v / v0) ** 2))

        v = np.arange(0.0, v_logic, 1e-6)
        v_in = v_logic - v
        residual = sum(v_in / r(b, v_in) for b in combo) - v / r(gate.preset, v)
        v_scan = v[np.argmin(np.abs(residual))]
        worst = max(worst, abs(solve_line(dev, gate, combo, v_logic).v_out - v_scan))
    judge(10, worst <= 2e-6, f"worst |v_out - scan| = {worst * 1e6:.3f} uV over 50 instances")


# ---------------------------------------------------------------------------
# Monte Carlo criteria

def test_c05_steepness_vs_stability(judge, tsf_ladder):
    parts, widths = [], []
    for delta in (30.0, 45.7, 60.0):
        est, half = width_confidence(tsf_ladder[delta], seed=0)
        widths.append((est, half))
        parts.append(f"tsf {delta:g}: {est:.4f}+/-{half:.4f} (abs {steepness(tsf_ladder[delta]):.4f} V)")
    ok = all(a[0] - b[0] > a[1] + b[1] for a, b in zip(widths, widths[1:]))
    judge(5, ok, "normalized 10-90 width " + "; ".join(parts))


def test_c06_vcma_steepening(judge, default_studies):
    s0, s1 = default_studies[0.0].sptc, default_studies[XI_VCMA].sptc
    w0, w1 = width_confidence(s0)[0], width_confidence(s1)[0]

    def tails(s):
        c = complement_curves(s)
        below = np.interp(0.9, c[:, 0], c[:, 1])
        above = np.interp(1.1, c[:, 0], c[:, 2])
        return below, above

    (b0, a0), (b1, a1) = tails(s0), tails(s1)
    ok = w1 < w0 and b1 < b0 and a1 < a0
    judge(6, ok, f"normalized width {w1:.4f} (VCMA) vs {w0:.4f}; p(0.9 V50) {b1:.4f} vs "
                 f"{b0:.4f}; 1-p(1.1 V50) {a1:.4f} vs {a0:.4f}")


def test_c07_nand_optimum_shift(judge, default_studies):
    r0, r1 = default_studies[0.0].report, default_studies[XI_VCMA].report
    shift = 1 - r1.v_logic / r0.v_logic

    def in_band(x, ref, k):
        return ref / k <= x <= ref * k

    ok = (shift >= 0.10 and r1.error_rate < r0.error_rate
          and in_band(r0.error_rate, REF_NAND_ERR[0], 2)
          and in_band(r1.error_rate, REF_NAND_ERR[1], 2))
    judge(7, ok, f"V_opt {r0.v_logic:.4f} -> {r1.v_logic:.4f} V ({100 * shift:.1f}% lower); "
                 f"error {r0.error_rate:.4f} -> {r1.error_rate:.4f} "
                 f"(reference 0.2633 -> 0.1725, x2 band)")


def test_c08_error_vs_tmr(judge, sweep):
    rows, _ = sweep
    e0, e1 = _row(rows, 2.0, 0.0).error_rate, _row(rows, 2.0, XI_VCMA).error_rate
    reduction = 1 - e1 / e0
    bands = all(ref / 2.5 <= e <= ref * 2.5 for e, ref in zip((e0, e1), REF_TMR2_ERR))
    monotone = True
    for xi in (0.0, XI_VCMA):
        series = [_row(rows, t, xi) for t in TMR_GRID]
        half = [error_rate_interval(r.study.device, NAND, r.study.sptc, r.v_logic_opt, seed=0)
                for r in series]
        for (a, ha), (b, hb) in zip(zip(series, half), zip(series[1:], half[1:])):
            monotone &= b.error_rate <= a.error_rate + ha + hb
    trend = {xi: [round(_row(rows, t, xi).error_rate, 4) for t in TMR_GRID]
             for xi in (0.0, XI_VCMA)}
    ok = reduction >= 0.40 and bands and monotone
    judge(8, ok, f"TMR 200%: error {e0:.4f} -> {e1:.4f} ({100 * reduction:.1f}% reduction, "
                 f"need 40%; x2.5 bands {'met' if bands else 'missed'}); error vs TMR "
                 f"{trend[0.0]} / {trend[XI_VCMA]} monotone={monotone}")


def test_c09_energy(judge, sweep):
    rows, _ = sweep
    en0, en1 = _row(rows, 2.0, 0.0).energy, _row(rows, 2.0, XI_VCMA).energy
    ok = 4e-13 <= en0 <= 2.5e-12 and en0 - en1 >= 2e-13
    judge(9, ok, f"TMR 200% energy {en0:.3e} J (window 4e-13..2.5e-12) -> {en1:.3e} J "
                 f"with VCMA, saving {en0 - en1:.3e} J (need 2e-13)")


def test_c11_parallelism_invariance(judge, tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[campaign]\nseed = 11\ntrials = 1000\ngrid_points = 8\n"
                   "v_min = 0.3\nv_max = 1.0\n[gate]\nscan_points = 11\n")
    digests = {}
    for j in (1, 4, 16):
        out = tmp_path / f"j{j}"
        assert cli.main(["gate", "--config", str(cfg), "--out", str(out),
                         "--parallelism", str(j)]) == 0
        digests[j] = {p.name: p.read_bytes() for p in sorted(out.iterdir())
                      if not p.name.startswith("manifest")}
    rerun = tmp_path / "rerun"
    assert cli.main(["gate", "--config", str(tmp_path / "j4" / "manifest_gate.json"),
                     "--out", str(rerun), "--parallelism", "16"]) == 0
    digests["manifest"] = {p.name: p.read_bytes() for p in sorted(rerun.iterdir())
                           if not p.name.startswith("manifest")}
    ok = all(d == digests[1] for d in digests.values())
    judge(11, ok, f"gate outputs {sorted(digests[1])} identical at parallelism 1/4/16 "
                  f"and on manifest rerun: {ok}")


def test_c12_sweep_runtime(judge, sweep):
    rows, elapsed = sweep
    ok = len(rows) == 10 and elapsed < SWEEP_BUDGET_S
    judge(12, ok, f"5 TMR x 2 xi sweep (41 points, 2000 trials, 1 ps, 3 ns) took "
                  f"{elapsed / 60:.1f} min (budget 30 min)")


def test_vcma_energy_lower_at_every_tmr(sweep):
    rows, _ = sweep
    for t in TMR_GRID:
        assert _row(rows, t, XI_VCMA).energy < _row(rows, t, 0.0).energy, t
