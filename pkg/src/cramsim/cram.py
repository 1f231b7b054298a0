"""Single-row CRAM logic: logic-line divider, output expectation, error rate, energy.

Logic 0 is the low-resistance P state and logic 1 the AP state. A gate
presets its output MTJ and relies on the output switching only when enough
current flows through it, i.e. when enough inputs sit in the low-resistance
state. Gates preset to 1 are driven with the opposite line polarity so the
current pushes AP -> P; all voltages below are magnitudes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import physics
from .physics import DeviceParams
from .sptc import Sptc, prob_at

MAX_ITER = 10_000
V_TOL = 1e-9
GOLDEN_TOL = 1e-6


class NonConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class GateSpec:
    name: str
    arity: int
    truth: dict
    preset: int

    def __post_init__(self):
        if self.arity not in (2, 3):
            raise ValueError("arity must be 2 or 3")
        if self.preset not in (0, 1):
            raise ValueError("preset must be 0 or 1")
        combos = set(itertools.product((0, 1), repeat=self.arity))
        if set(self.truth) != combos:
            raise ValueError(f"truth table of {self.name} must cover all {len(combos)} combinations")
        if any(v not in (0, 1) for v in self.truth.values()):
            raise ValueError("truth table outputs must be 0 or 1")

    @property
    def combos(self):
        return list(itertools.product((0, 1), repeat=self.arity))

    @property
    def preset_state(self) -> str:
        return logic_to_state(self.preset)


def logic_to_state(bit: int) -> str:
    return "P" if bit == 0 else "AP"


def _gate(name, arity, fn, preset):
    truth = {c: int(fn(*c)) for c in itertools.product((0, 1), repeat=arity)}
    return GateSpec(name, arity, truth, preset)


GATES = {
    # preset 0, switch when the input current is high enough
    "NAND": _gate("NAND", 2, lambda a, b: not (a and b), 0),
    "NOR": _gate("NOR", 2, lambda a, b: not (a or b), 0),
    # preset 1, switch AP -> P when the input current is high enough
    "AND": _gate("AND", 2, lambda a, b: a and b, 1),
    "OR": _gate("OR", 2, lambda a, b: a or b, 1),
    "MAJ": _gate("MAJ", 3, lambda a, b, c: a + b + c >= 2, 1),
}


def get_gate(name: str) -> GateSpec:
    try:
        return GATES[name.upper()]
    except KeyError:
        raise ValueError(f"unknown gate {name!r}; choose from {sorted(GATES)}") from None


@dataclass
class LineSolution:
    v_out: float
    i_line: float
    branch_currents: tuple
    iterations: int
    v_in: float


def _r(dev: DeviceParams, bit: int, v: float) -> float:
    return float(physics.resistance(dev, logic_to_state(bit), v=v))


def solve_line(dev: DeviceParams, gate: GateSpec, input_states: Sequence[int],
               v_logic: float) -> LineSolution:
    """Voltage split between the parallel input branches and the output MTJ.

    The input junctions share the drop ``v_logic - v_out``; every resistance
    is evaluated at the voltage across itself, so the split is found by a
    (damped) fixed-point iteration on ``v_out``.
    """
    if v_logic < 0:
        raise ValueError("v_logic is a magnitude and must be >= 0")
    if len(input_states) != gate.arity:
        raise ValueError(f"{gate.name} takes {gate.arity} inputs, got {len(input_states)}")
    if v_logic == 0:
        return LineSolution(0.0, 0.0, tuple(0.0 for _ in input_states), 0, 0.0)

    def update(v_out):
        v_in = v_logic - v_out
        g_par = sum(1.0 / _r(dev, b, v_in) for b in input_states)
        r_out = _r(dev, gate.preset, v_out)
        return v_logic * r_out / (1.0 / g_par + r_out)

    v_out = update(0.5 * v_logic)
    step = math.inf
    relax = 1.0
    for it in range(1, MAX_ITER + 1):
        target = update(v_out)
        new_step = target - v_out
        if abs(new_step) > abs(step):
            relax *= 0.5
        v_out += relax * new_step
        step = new_step
        if abs(new_step) < V_TOL:
            break
    else:
        raise NonConvergenceError(f"logic line did not converge in {MAX_ITER} iterations")

    v_in = v_logic - v_out
    branches = tuple(v_in / _r(dev, b, v_in) for b in input_states)
    i_line = v_out / _r(dev, gate.preset, v_out)
    return LineSolution(float(v_out), float(i_line), branches, it, float(v_in))


def kirchhoff_residual(dev: DeviceParams, gate: GateSpec, input_states, v_logic, v_out):
    """Current into the middle node minus current out through the output MTJ."""
    v_in = v_logic - v_out
    i_in = sum(v_in / _r(dev, b, v_in) for b in input_states)
    return i_in - v_out / _r(dev, gate.preset, v_out)


# ---------------------------------------------------------------------------
# statistics of the output bit

@dataclass
class ComboRow:
    combo: tuple
    v_out: float
    p_switch: float
    d_out: float
    expected: int
    i_line: float

    @property
    def label(self) -> str:
        return "".join(str(b) for b in self.combo)


@dataclass
class GateReport:
    gate: str
    v_logic: float
    rows: list
    error_rate: float
    error_rate_worst: float
    energy: float
    provenance: dict = field(default_factory=dict)


def combo_rows(dev: DeviceParams, gate: GateSpec, sptc: Sptc, v_logic: float) -> list:
    rows = []
    for combo in gate.combos:
        sol = solve_line(dev, gate, combo, v_logic)
        p = prob_at(sptc, sol.v_out)
        d_out = p if gate.preset == 0 else 1.0 - p
        rows.append(ComboRow(combo, sol.v_out, p, d_out, gate.truth[combo], sol.i_line))
    return rows


def gate_expectation(dev: DeviceParams, gate: GateSpec, sptc: Sptc, v_logic: float) -> dict:
    """<D_out> for every input combination."""
    return {r.combo: r.d_out for r in combo_rows(dev, gate, sptc, v_logic)}


def _errors(rows):
    return np.array([abs(r.d_out - r.expected) for r in rows])


def error_rate(dev: DeviceParams, gate: GateSpec, sptc: Sptc, v_logic: float,
               aggregate: str = "mean") -> float:
    err = _errors(combo_rows(dev, gate, sptc, v_logic))
    if aggregate == "mean":
        return float(err.mean())
    if aggregate == "worst":
        return float(err.max())
    raise ValueError("aggregate must be 'mean' or 'worst'")


def operation_energy(dev: DeviceParams, gate: GateSpec, v_logic: float,
                     pulse_duration: float) -> float:
    """Logic-line dissipation averaged over input combinations, joules."""
    currents = [solve_line(dev, gate, c, v_logic).i_line for c in gate.combos]
    return float(v_logic * np.mean(currents) * pulse_duration)


def evaluate_gate(dev: DeviceParams, gate: GateSpec, sptc: Sptc, v_logic: float,
                  pulse_duration: float, provenance: Optional[dict] = None) -> GateReport:
    rows = combo_rows(dev, gate, sptc, v_logic)
    err = _errors(rows)
    energy = float(v_logic * np.mean([r.i_line for r in rows]) * pulse_duration)
    return GateReport(gate.name, float(v_logic), rows, float(err.mean()), float(err.max()),
                      energy, dict(provenance or {}))


def error_rate_interval(dev: DeviceParams, gate: GateSpec, sptc: Sptc, v_logic: float,
                        n_boot: int = 400, seed: int = 0, level: float = 0.95) -> float:
    """Half-width of a parametric-bootstrap interval of the mean error at fixed ``v_logic``.

    Counts are redrawn from the observed proportions and the curve is refit.
    """
    rng = np.random.default_rng(seed)
    vals = []
    for _ in range(n_boot):
        k = rng.binomial(sptc.n, sptc.p_raw)
        vals.append(error_rate(dev, gate, Sptc.from_counts(sptc.voltages, k, sptc.n), v_logic))
    lo, hi = np.quantile(vals, [(1 - level) / 2, (1 + level) / 2])
    return float(0.5 * (hi - lo))


# ---------------------------------------------------------------------------
# optimisation

def golden_section(fn: Callable[[float], float], a: float, b: float,
                   tol: float = GOLDEN_TOL) -> float:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def minimize_on_range(fn: Callable[[float], float], v_range, n_grid: int = 201):
    """201-point scan, then golden-section refinement inside the best bracket."""
    lo, hi = (float(x) for x in v_range)
    if not hi > lo:
        raise ValueError(f"v_range must be increasing, got {v_range!r}")
    grid = np.linspace(lo, hi, n_grid)
    vals = np.array([fn(v) for v in grid])
    i = int(np.argmin(vals))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, n_grid - 1)]
    v_ref = golden_section(fn, a, b)
    e_ref = fn(v_ref)
    if e_ref <= vals[i]:
        return float(v_ref), float(e_ref)
    return float(grid[i]), float(vals[i])


def optimize_logic_voltage(dev: DeviceParams, gate: GateSpec, sptc: Sptc, v_range=None):
    """Logic voltage minimising the mean error rate; returns (v_logic, error)."""
    if v_range is None:
        v_range = default_v_range(sptc)
    if len(v_range) != 2:
        raise ValueError("v_range must be a (low, high) pair")
    return minimize_on_range(lambda v: error_rate(dev, gate, sptc, v), v_range)


def default_v_range(sptc: Sptc):
    # output MTJ sees at most ~2/3 of the line voltage for 2-input gates
    return (0.0, 3.0 * float(sptc.voltages[-1]))


# ---------------------------------------------------------------------------
# campaigns and sweeps

@dataclass(frozen=True)
class Campaign:
    """Monte Carlo settings shared by every cell of a gate study."""

    pulse: object
    n_trials: int = 2000
    seed: int = 0
    parallelism: int = 1
    n_points: int = 41
    v_grid: Optional[tuple] = None
    v_range: Optional[tuple] = None


@dataclass
class GateStudy:
    device: DeviceParams
    sptc: Sptc
    v_logic: float
    report: GateReport


def gate_study(dev: DeviceParams, gate: GateSpec, campaign: Campaign,
               stream: int = 0) -> GateStudy:
    """SPTC for the output's preset transition, then the optimal logic voltage."""
    from .sptc import auto_grid, run_sptc

    if not dev.is_calibrated:
        dev = dev.calibrated()
    state = gate.preset_state
    if campaign.v_grid is not None:
        grid = np.asarray(campaign.v_grid, dtype=float)
    else:
        grid = auto_grid(dev, campaign.pulse, campaign.seed, initial_state=state,
                         n_points=campaign.n_points, stream=stream,
                         parallelism=campaign.parallelism)
    sptc = run_sptc(dev, campaign.pulse, grid, campaign.n_trials, campaign.seed,
                    parallelism=campaign.parallelism, initial_state=state, stream=stream)
    v_opt, _ = optimize_logic_voltage(dev, gate, sptc, campaign.v_range)
    report = evaluate_gate(dev, gate, sptc, v_opt, campaign.pulse.duration,
                           provenance=sptc.provenance)
    return GateStudy(dev, sptc, v_opt, report)


@dataclass
class SweepRow:
    tmr_ratio: float
    xi: float
    v_logic_opt: float
    error_rate: float
    error_rate_worst: float
    energy: float
    v50: float
    study: Optional[GateStudy] = field(default=None, repr=False, compare=False)

    CSV_HEADER = ("tmr_ratio", "xi_fJ_per_Vm", "v_logic_opt_V", "error_rate",
                  "error_rate_worst", "energy_J")

    def csv_fields(self):
        return [f"{self.tmr_ratio:.9g}", f"{self.xi * 1e15:.9g}", f"{self.v_logic_opt:.9g}",
                f"{self.error_rate:.9g}", f"{self.error_rate_worst:.9g}", f"{self.energy:.9g}"]


def tmr_sweep(dev_template: DeviceParams, gate: GateSpec, tmr_grid, xi_values,
              campaign: Campaign, progress: Optional[Callable] = None) -> list:
    """One optimised gate study per (TMR, xi) cell; each cell has its own substream."""
    from .sptc import v50

    tmr_grid = [float(t) for t in tmr_grid]
    if any(t <= 0 for t in tmr_grid):
        raise ValueError("TMR ratios must be positive")
    rows = []
    cells = list(itertools.product(tmr_grid, [float(x) for x in xi_values]))
    for idx, (tmr, xi) in enumerate(cells):
        dev = dev_template.replace(tmr_override=tmr, xi=xi).calibrated()
        study = gate_study(dev, gate, campaign, stream=idx + 1)
        rep = study.report
        rows.append(SweepRow(tmr, xi, rep.v_logic, rep.error_rate, rep.error_rate_worst,
                             rep.energy, v50(study.sptc), study))
        if progress is not None:
            progress(idx, len(cells), rows[-1])
    return rows
