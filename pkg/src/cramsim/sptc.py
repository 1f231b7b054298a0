"""Monte Carlo switching-probability transfer curves (SPTC) and curve analytics."""

from __future__ import annotations

import csv
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.isotonic import IsotonicRegression
from sklearn.utils.validation import check_is_fitted

from .llg import PulseSpec, simulate_block, trial_generator
from .physics import DeviceParams

TRIAL_BLOCK = 500
Z95 = 1.959963984540054


class CurveRangeError(ValueError):
    """The curve never reaches the requested probability level on its grid."""


@dataclass
class Sptc:
    voltages: np.ndarray
    p_raw: np.ndarray
    p_iso: np.ndarray
    n: np.ndarray
    ci_lo: np.ndarray
    ci_hi: np.ndarray
    provenance: dict = field(default_factory=dict)

    CSV_HEADER = ("v_volts", "p_raw", "p_iso", "n", "ci_lo", "ci_hi")

    @classmethod
    def from_counts(cls, voltages, k, n, provenance=None) -> "Sptc":
        voltages = np.asarray(voltages, dtype=float)
        k = np.asarray(k, dtype=np.int64)
        n = np.broadcast_to(np.asarray(n, dtype=np.int64), k.shape).copy()
        if np.any(n < 1) or np.any(k < 0) or np.any(k > n):
            raise ValueError("counts must satisfy 0 <= k <= n, n >= 1")
        p_raw = k / n
        lo, hi = wilson_interval(k, n)
        return cls(voltages, p_raw, isotonic(p_raw, n), n, lo, hi, dict(provenance or {}))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.CSV_HEADER)
            for row in zip(self.voltages, self.p_raw, self.p_iso, self.n, self.ci_lo, self.ci_hi):
                w.writerow([f"{row[0]:.9g}", f"{row[1]:.9g}", f"{row[2]:.9g}", int(row[3]),
                            f"{row[4]:.9g}", f"{row[5]:.9g}"])

    @classmethod
    def from_csv(cls, path) -> "Sptc":
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        col = lambda name, t=float: np.array([t(r[name]) for r in rows])
        return cls(col("v_volts"), col("p_raw"), col("p_iso"), col("n", int),
                   col("ci_lo"), col("ci_hi"))


def wilson_interval(k, n, z: float = Z95):
    """Wilson score interval for a binomial proportion."""
    k = np.asarray(k, dtype=float)
    n = np.asarray(n, dtype=float)
    p = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2 * n)) / denom
    half = z * np.sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / denom
    return np.clip(center - half, 0.0, 1.0), np.clip(center + half, 0.0, 1.0)


def isotonic(p, weights):
    """Weighted pool-adjacent-violators fit, nondecreasing."""
    x = np.arange(len(p), dtype=float)
    reg = IsotonicRegression(y_min=0.0, y_max=1.0, increasing=True)
    return reg.fit_transform(x, np.asarray(p, dtype=float), sample_weight=np.asarray(weights, float))


# ---------------------------------------------------------------------------
# campaign

def pulse_polarity(initial_state: str) -> float:
    """Sign of the pulse that drives the switch away from ``initial_state``."""
    return 1.0 if initial_state == "P" else -1.0


def llg_trials(dev: DeviceParams, pulse: PulseSpec, initial_state: str, seed: int,
               stream: int, vi: int, voltage: float, start: int, stop: int) -> int:
    """Switch count for trials ``start:stop`` at grid index ``vi``."""
    rngs = [trial_generator(seed, stream, vi, t) for t in range(start, stop)]
    amp = pulse_polarity(initial_state) * voltage
    res = simulate_block(dev, pulse.with_amplitude(amp), initial_state, rngs)
    return int(res.switched.sum())


def _call(job):
    fn, args = job
    return fn(*args)


def run_sptc(dev: DeviceParams, pulse: PulseSpec, v_grid, n_trials: int, seed: int,
             parallelism: int = 1, initial_state: str = "P", stream: int = 0,
             trials: Optional[Callable] = None) -> Sptc:
    """Switching probability at each grid voltage from ``n_trials`` pulses.

    Voltages are pulse magnitudes; the sign is chosen from ``initial_state``.
    Trial ``t`` at grid index ``i`` always uses the stream keyed by
    (seed, stream, i, t), and work is cut into fixed blocks, so the result
    does not depend on ``parallelism``. ``trials`` replaces the LLG
    simulator with any callable of the same signature as :func:`llg_trials`
    minus the first four arguments.
    """
    v_grid = np.asarray(v_grid, dtype=float)
    if v_grid.ndim != 1 or v_grid.size == 0:
        raise ValueError("v_grid must be a nonempty 1-d sequence")
    if np.any(np.diff(v_grid) <= 0):
        raise ValueError("v_grid must be strictly increasing")
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if seed is None:
        raise ValueError("seed is mandatory")
    if trials is None:
        if not dev.is_calibrated:
            dev = dev.calibrated()
        head = (llg_trials, (dev, pulse, initial_state, int(seed), int(stream)))
    else:
        head = (trials, ())

    jobs = []
    for vi, v in enumerate(v_grid):
        for start in range(0, n_trials, TRIAL_BLOCK):
            stop = min(start + TRIAL_BLOCK, n_trials)
            jobs.append((vi, (head[0], head[1] + (vi, float(v), start, stop))))

    counts = np.zeros(v_grid.size, dtype=np.int64)
    workers = resolve_parallelism(parallelism)
    if workers == 1 or len(jobs) == 1:
        results = [_call(job) for _, job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_call, [job for _, job in jobs]))
    for (vi, _), k in zip(jobs, results):
        counts[vi] += k

    provenance = {
        "device": None if dev is None else dev.to_dict(),
        "pulse": None if pulse is None else {"duration": pulse.duration, "dt": pulse.dt,
                                             "relax_time": pulse.relax_time},
        "initial_state": initial_state,
        "seed": int(seed),
        "stream": int(stream),
        "n_trials": int(n_trials),
        "grid": v_grid.tolist(),
    }
    return Sptc.from_counts(v_grid, counts, n_trials, provenance)


def resolve_parallelism(parallelism) -> int:
    if parallelism is None or parallelism == 0:
        return os.cpu_count() or 1
    if parallelism < 0:
        raise ValueError("parallelism must be >= 0")
    return int(parallelism)


# ---------------------------------------------------------------------------
# analytics

def crossing(sptc: Sptc, level: float) -> float:
    """Voltage where the isotonic curve first reaches ``level`` (linear interpolation)."""
    p = sptc.p_iso
    v = sptc.voltages
    idx = np.flatnonzero(p >= level)
    if idx.size == 0:
        raise CurveRangeError(f"curve never reaches p = {level:g}; widen the grid upward")
    i = idx[0]
    if i == 0:
        if p[0] == level and len(p) == 1:
            return float(v[0])
        raise CurveRangeError(f"curve already at p >= {level:g} on the first grid point; "
                              "widen the grid downward")
    return float(v[i - 1] + (level - p[i - 1]) / (p[i] - p[i - 1]) * (v[i] - v[i - 1]))


def v50(sptc: Sptc) -> float:
    return crossing(sptc, 0.5)


def steepness(sptc: Sptc, lo: float = 0.1, hi: float = 0.9) -> float:
    """Width of the 10 %-90 % transition in volts."""
    return crossing(sptc, hi) - crossing(sptc, lo)


def normalized_steepness(sptc: Sptc) -> float:
    return steepness(sptc) / v50(sptc)


def prob_at(sptc: Sptc, v):
    """Monotone piecewise-linear evaluation of the isotonic curve, clamped at the ends."""
    out = np.interp(np.asarray(v, dtype=float), sptc.voltages, sptc.p_iso)
    out = np.clip(out, 0.0, 1.0)
    return float(out) if np.ndim(out) == 0 else out


def complement_curves(sptc: Sptc) -> np.ndarray:
    """Rows of (v / v50, p, 1 - p) for log-scale plotting.

    Zero entries are replaced by the Wilson bound, the smallest probability
    the campaign can resolve at that point.
    """
    x = sptc.voltages / v50(sptc)
    p = sptc.p_iso.copy()
    q = 1.0 - sptc.p_iso
    p = np.where(p <= 0.0, sptc.ci_hi, p)
    q = np.where(q <= 0.0, 1.0 - sptc.ci_lo, q)
    return np.column_stack([x, p, q])


def write_complement_csv(sptc: Sptc, path) -> None:
    rows = complement_curves(sptc)
    with open(path, "w", newline="") as fh:
        fh.write("v_over_v50,p_original,p_complement\n")
        for x, p, q in rows:
            fh.write(f"{x:.9g},{p:.9g},{q:.9g}\n")


# ---------------------------------------------------------------------------
# estimator front end

class SptcEstimator(BaseEstimator):
    """Switching-probability curve as an estimator.

    ``fit(X)`` runs the Monte Carlo campaign on the voltages in ``X`` and
    ``predict_proba(X)`` evaluates the fitted monotone curve.

    Parameters
    ----------
    device : DeviceParams
    pulse : PulseSpec
    n_trials : int
    seed : int
    n_jobs : int, default 1
        Worker processes; results do not depend on it.
    initial_state : {'P', 'AP'}
    """

    def __init__(self, device=None, pulse=None, n_trials=2000, seed=0, n_jobs=1,
                 initial_state="P"):
        self.device = device
        self.pulse = pulse
        self.n_trials = n_trials
        self.seed = seed
        self.n_jobs = n_jobs
        self.initial_state = initial_state

    def fit(self, X, y=None):
        v = _as_voltages(X)
        dev = self.device if self.device is not None else DeviceParams()
        pulse = self.pulse if self.pulse is not None else PulseSpec()
        self.sptc_ = run_sptc(dev, pulse, v, self.n_trials, self.seed,
                              parallelism=self.n_jobs, initial_state=self.initial_state)
        self.voltages_ = self.sptc_.voltages
        self.p_iso_ = self.sptc_.p_iso
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "sptc_")
        return prob_at(self.sptc_, _as_voltages(X))

    def predict(self, X):
        """Most likely outcome (1 = switched) at each voltage."""
        return (self.predict_proba(X) >= 0.5).astype(int)

    @property
    def v50_(self):
        check_is_fitted(self, "sptc_")
        return v50(self.sptc_)

    @property
    def steepness_(self):
        check_is_fitted(self, "sptc_")
        return steepness(self.sptc_)


def _as_voltages(X):
    v = np.asarray(X, dtype=float)
    if v.ndim == 2 and v.shape[1] == 1:
        v = v[:, 0]
    if v.ndim != 1:
        raise ValueError("expected a 1-d array of voltages or an (n, 1) column")
    if not np.all(np.isfinite(v)):
        raise ValueError("voltages must be finite")
    return v


PILOT_STREAM_OFFSET = 1_000_000


def auto_grid(dev: DeviceParams, pulse: PulseSpec, seed: int, initial_state: str = "P",
              n_points: int = 41, pilot_trials: int = 64, v_max: float = 3.0,
              stream: int = 0, parallelism: int = 1) -> np.ndarray:
    """Voltage grid covering the transition, located by a cheap pilot campaign.

    The pilot uses its own substreams so it never shares draws with the
    main campaign.
    """
    pilot_v = np.linspace(v_max / 60, v_max, 60)
    pilot = run_sptc(dev, pulse, pilot_v, pilot_trials, seed, parallelism=parallelism,
                     initial_state=initial_state, stream=PILOT_STREAM_OFFSET + stream)
    p = pilot.p_raw
    moving = np.flatnonzero(p > 0)
    if moving.size == 0:
        raise CurveRangeError(f"no switching observed up to {v_max:g} V")
    lo = pilot_v[moving[0] - 1] if moving[0] > 0 else 0.0
    done = np.flatnonzero(p >= 1.0)
    hi = min(1.3 * pilot_v[done[0]], v_max) if done.size else v_max
    return np.linspace(lo, hi, n_points)


def width_confidence(sptc: Sptc, n_boot: int = 400, seed: int = 0, level: float = 0.95,
                     normalized: bool = True):
    """Parametric-bootstrap interval of the (normalized) 10-90 % width.

    Returns (estimate, half_width).
    """
    rng = np.random.default_rng(seed)
    est = normalized_steepness(sptc) if normalized else steepness(sptc)
    widths = []
    for _ in range(n_boot):
        k = rng.binomial(sptc.n, sptc.p_raw)
        s = Sptc.from_counts(sptc.voltages, k, sptc.n)
        try:
            widths.append(normalized_steepness(s) if normalized else steepness(s))
        except CurveRangeError:
            continue
    lo, hi = np.quantile(widths, [(1 - level) / 2, (1 + level) / 2])
    return float(est), float(0.5 * (hi - lo))
