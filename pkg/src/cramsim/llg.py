"""Stochastic macrospin LLG dynamics with spin-transfer torque and VCMA.

The integrator works on component arrays so that one call advances a whole
block of independent trajectories. Each trajectory owns its random stream
(initial angle first, then the per-step thermal field), so a trajectory's
result depends only on its seed, never on which block it was simulated in.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit
from scipy import special

from . import physics
from .physics import CONST, DeviceParams

M_P = (0.0, 0.0, 1.0)
SWITCH_THRESHOLD = -0.5
STATES = ("P", "AP")


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class PulseSpec:
    """Rectangular voltage pulse followed by a zero-bias relaxation window.

    Positive amplitude lowers the PMA and drives P -> AP.
    """

    amplitude: float = 0.0
    duration: float = 1e-9
    dt: float = 1e-12
    relax_time: float = 2e-9

    def __post_init__(self):
        if not self.duration > 0:
            raise ValueError(f"duration must be > 0, got {self.duration!r}")
        if not 0 < self.dt <= self.duration:
            raise ValueError(f"dt must satisfy 0 < dt <= duration, got {self.dt!r}")
        if self.relax_time < 0:
            raise ValueError(f"relax_time must be >= 0, got {self.relax_time!r}")

    @property
    def n_pulse_steps(self) -> int:
        return int(round(self.duration / self.dt))

    @property
    def n_relax_steps(self) -> int:
        return int(round(self.relax_time / self.dt))

    @property
    def n_steps(self) -> int:
        return self.n_pulse_steps + self.n_relax_steps

    def with_amplitude(self, amplitude: float) -> "PulseSpec":
        return PulseSpec(float(amplitude), self.duration, self.dt, self.relax_time)


@dataclass
class Trajectory:
    t: np.ndarray
    m: np.ndarray
    switched: bool
    switch_time: Optional[float] = None
    initial_state: str = "P"

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("t_s,mx,my,mz\n")
            for t, (mx, my, mz) in zip(self.t, self.m):
                fh.write(f"{t:.9g},{mx:.9g},{my:.9g},{mz:.9g}\n")


def _state_sign(state: str) -> float:
    if state not in STATES:
        raise ValueError(f"state must be 'P' or 'AP', got {state!r}")
    return 1.0 if state == "P" else -1.0


# ---------------------------------------------------------------------------
# initial angle

def _angle_cdf_complement(delta, w):
    """P(1 - cos(theta) <= w) for the thermal-equilibrium cone of a single well."""
    u = 1.0 - w
    sd = math.sqrt(delta)
    # erfi ratio written with Dawson's function to avoid overflow at large delta
    return 1.0 - np.exp(delta * (u * u - 1.0)) * special.dawsn(sd * u) / special.dawsn(sd)


def invert_initial_angle(delta: float, r) -> np.ndarray:
    """Map uniform variates ``r`` in [0, 1) to polar angles from the easy axis."""
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta!r}")
    r = np.asarray(r, dtype=float)
    lo = np.zeros_like(r)
    hi = np.ones_like(r)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        below = _angle_cdf_complement(delta, mid) < r
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    w = 0.5 * (lo + hi)
    return 2.0 * np.arcsin(np.sqrt(0.5 * w))


def sample_initial_angle(delta: float, rng: np.random.Generator, size=None):
    """Draw theta in [0, pi/2] with density proportional to sin(theta) exp(-delta sin^2 theta)."""
    theta = invert_initial_angle(delta, rng.random(size))
    return float(theta) if size is None else theta


# ---------------------------------------------------------------------------
# fields and single steps

def effective_field(dev: DeviceParams, m, v, h_thermal=(0.0, 0.0, 0.0)):
    """H_ext + H_demag + H_thermal + H_K(v), in A/m."""
    m = np.asarray(m, dtype=float)
    return (
        np.asarray(dev.h_ext)
        + physics.demag_field(dev, m)
        + np.asarray(h_thermal, dtype=float)
        + physics.anisotropy_field(dev, v, m[..., 2])
    )


@dataclass
class _Coefficients:
    """Per-(device, voltage) constants of the drift, all in tesla or 1/s."""

    gp: float
    alpha: float
    bext: tuple
    kz: float
    stt: float
    g0: float
    g1: float

    @classmethod
    def build(cls, dev: DeviceParams, v: float, j: Optional[float] = None):
        if not dev.is_calibrated:
            raise SimulationError("device must be calibrated before simulation")
        ms, mu0 = dev.ms, CONST.mu0
        kz = 2.0 * float(physics.interfacial_anisotropy(dev, v)) / (ms * dev.t_f) - mu0 * ms
        pol = physics.spin_polarization(dev)
        stt = CONST.hbar * pol / (2.0 * CONST.e_charge * dev.t_f * ms)
        if j is not None:
            # fixed current density: bJ = stt * j
            g0, g1 = float(j) * dev.area, 0.0
            v_scale = 1.0
        else:
            r_p = physics.resistance(dev, "P")
            r_ap = float(physics.resistance(dev, "AP", v=v))
            # cosine conductance model, G(m_z) = g0 + g1 m_z
            g0 = (r_p + r_ap) / (2.0 * r_p * r_ap)
            g1 = (r_ap - r_p) / (2.0 * r_p * r_ap)
            v_scale = v
        return cls(
            gp=CONST.gamma / (1.0 + dev.alpha**2),
            alpha=dev.alpha,
            bext=tuple(mu0 * h for h in dev.h_ext),
            kz=kz,
            stt=stt * v_scale / dev.area,
            g0=g0,
            g1=g1,
        )

    def vector(self) -> np.ndarray:
        return np.array([self.kz, self.stt, self.g0, self.g1])


def _drift(c: _Coefficients, mx, my, mz, nx, ny, nz):
    bx = c.bext[0] + nx
    by = c.bext[1] + ny
    bz = c.bext[2] + c.kz * mz + nz
    bj = c.stt * (c.g0 + c.g1 * mz)
    cx = my * bz - mz * by
    cy = mz * bx - mx * bz
    cz = mx * by - my * bx
    d = mx * bx + my * by + mz * bz
    a = c.alpha
    # m x (m x z) = m m_z - z
    fx = -c.gp * (cx + a * (mx * d - bx) - bj * (mx * mz))
    fy = -c.gp * (cy + a * (my * d - by) - bj * (my * mz))
    fz = -c.gp * (cz + a * (mz * d - bz) - bj * (mz * mz - 1.0))
    return fx, fy, fz


def _heun(c: _Coefficients, mx, my, mz, nx, ny, nz, dt):
    f0x, f0y, f0z = _drift(c, mx, my, mz, nx, ny, nz)
    px = mx + f0x * dt
    py = my + f0y * dt
    pz = mz + f0z * dt
    f1x, f1y, f1z = _drift(c, px, py, pz, nx, ny, nz)
    h = 0.5 * dt
    mx = mx + (f0x + f1x) * h
    my = my + (f0y + f1y) * h
    mz = mz + (f0z + f1z) * h
    inv = 1.0 / np.sqrt(mx * mx + my * my + mz * mz)
    return mx * inv, my * inv, mz * inv


def llg_step(dev: DeviceParams, m, v_mtj: float, j: float, dt: float,
             rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Advance one unit vector by one stochastic Heun step at fixed current density ``j``."""
    m = np.asarray(m, dtype=float)
    if abs(np.linalg.norm(m) - 1.0) > 1e-6:
        raise SimulationError("m must be a unit vector")
    sigma = physics.thermal_field_sigma(dev, dt)
    if sigma > 0:
        if rng is None:
            raise SimulationError("a random stream is required at T > 0")
        nx, ny, nz = sigma * rng.standard_normal(3)
    else:
        nx = ny = nz = 0.0
    c = _Coefficients.build(dev, v_mtj, j=j)
    return np.array(_heun(c, m[0], m[1], m[2], nx, ny, nz, dt))


# ---------------------------------------------------------------------------
# pulse simulation

def trial_generator(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based stream for one trial, addressed by ``key``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


@dataclass
class BlockResult:
    switched: np.ndarray
    switch_step: np.ndarray
    m_final: np.ndarray
    m_initial: np.ndarray
    record: Optional[np.ndarray] = field(default=None, repr=False)  # (n, n_steps + 1, 3)


@njit(cache=True)
def _integrate(m0, noise, n_steps, n_pulse, dt, gp, alpha, bext, coef_pulse, coef_relax,
               s0, rec):
    """Heun integration of every trajectory in the block; same arithmetic as ``_heun``.

    ``coef_*`` hold (kz, stt, g0, g1) for the pulse and the relaxation window.
    ``noise`` is (n, n_steps, 3) in tesla, or (n, 0, 3) for a noiseless run.
    ``rec`` is (n, n_steps + 1, 3) when recording, else (0, 0, 3).
    """
    n = m0.shape[0]
    has_noise = noise.shape[1] > 0
    recording = rec.shape[0] > 0
    m_final = np.empty((n, 3))
    switch_step = np.full(n, -1, dtype=np.int64)
    h = 0.5 * dt
    for i in range(n):
        mx, my, mz = m0[i, 0], m0[i, 1], m0[i, 2]
        if recording:
            rec[i, 0, 0] = mx
            rec[i, 0, 1] = my
            rec[i, 0, 2] = mz
        for k in range(n_steps):
            c = coef_pulse if k < n_pulse else coef_relax
            kz, stt, g0, g1 = c[0], c[1], c[2], c[3]
            if has_noise:
                bx = bext[0] + noise[i, k, 0]
                by = bext[1] + noise[i, k, 1]
                bz0 = bext[2] + noise[i, k, 2]
            else:
                bx, by, bz0 = bext[0], bext[1], bext[2]
            # predictor
            bz = bz0 + kz * mz
            bj = stt * (g0 + g1 * mz)
            d = mx * bx + my * by + mz * bz
            f0x = -gp * ((my * bz - mz * by) + alpha * (mx * d - bx) - bj * (mx * mz))
            f0y = -gp * ((mz * bx - mx * bz) + alpha * (my * d - by) - bj * (my * mz))
            f0z = -gp * ((mx * by - my * bx) + alpha * (mz * d - bz) - bj * (mz * mz - 1.0))
            px = mx + f0x * dt
            py = my + f0y * dt
            pz = mz + f0z * dt
            # corrector
            bz = bz0 + kz * pz
            bj = stt * (g0 + g1 * pz)
            d = px * bx + py * by + pz * bz
            f1x = -gp * ((py * bz - pz * by) + alpha * (px * d - bx) - bj * (px * pz))
            f1y = -gp * ((pz * bx - px * bz) + alpha * (py * d - by) - bj * (py * pz))
            f1z = -gp * ((px * by - py * bx) + alpha * (pz * d - bz) - bj * (pz * pz - 1.0))
            mx = mx + (f0x + f1x) * h
            my = my + (f0y + f1y) * h
            mz = mz + (f0z + f1z) * h
            inv = 1.0 / np.sqrt(mx * mx + my * my + mz * mz)
            mx *= inv
            my *= inv
            mz *= inv
            if switch_step[i] < 0 and s0 * mz < SWITCH_THRESHOLD:
                switch_step[i] = k + 1
            if recording:
                rec[i, k + 1, 0] = mx
                rec[i, k + 1, 1] = my
                rec[i, k + 1, 2] = mz
        m_final[i, 0] = mx
        m_final[i, 1] = my
        m_final[i, 2] = mz
        if not s0 * mz < SWITCH_THRESHOLD:
            switch_step[i] = -1
    return m_final, switch_step


def initial_magnetization(theta, phi, initial_state: str) -> np.ndarray:
    """Unit vectors at polar angle ``theta`` from the easy axis of ``initial_state``."""
    s0 = _state_sign(initial_state)
    return np.array([[math.sin(t) * math.cos(p), math.sin(t) * math.sin(p), s0 * math.cos(t)]
                     for t, p in zip(theta, phi)]).reshape(-1, 3)


def simulate_block(dev: DeviceParams, pulse: PulseSpec, initial_state: str,
                   rngs: Sequence[np.random.Generator], record: bool = False,
                   initial_theta=None) -> BlockResult:
    """Run one pulse for every stream in ``rngs``; trajectories are independent.

    Each stream is consumed as: one uniform for theta, one for phi, then
    ``n_steps`` x 3 normals for the thermal field (none at zero noise).
    """
    if not dev.is_calibrated:
        raise SimulationError("device must be calibrated before simulation")
    s0 = _state_sign(initial_state)
    n = len(rngs)
    n_steps = pulse.n_steps
    sigma = physics.thermal_field_sigma(dev, pulse.dt)
    delta = physics.thermal_stability(dev, 0.0) if dev.temperature > 0 else math.inf

    r_theta = np.empty(n)
    phi = np.empty(n)
    noise = np.empty((n, n_steps if sigma > 0 else 0, 3))
    for i, rng in enumerate(rngs):
        r_theta[i] = rng.random()
        phi[i] = 2.0 * math.pi * rng.random()
        if sigma > 0:
            noise[i] = rng.standard_normal((n_steps, 3))
    noise *= sigma

    if initial_theta is not None:
        theta = np.broadcast_to(np.asarray(initial_theta, dtype=float), (n,)).copy()
    elif math.isinf(delta):
        theta = np.zeros(n)
    else:
        if delta <= 0:
            raise SimulationError(f"zero-bias barrier is not positive (delta={delta:.3g})")
        theta = invert_initial_angle(delta, r_theta)
    m_initial = initial_magnetization(theta, phi, initial_state)

    c_pulse = _Coefficients.build(dev, pulse.amplitude)
    c_relax = _Coefficients.build(dev, 0.0)
    rec = np.empty((n, n_steps + 1, 3) if record else (0, 0, 3))
    m_final, switch_step = _integrate(
        m_initial, noise, n_steps, pulse.n_pulse_steps, pulse.dt, c_pulse.gp, c_pulse.alpha,
        np.array(c_pulse.bext), c_pulse.vector(), c_relax.vector(), s0, rec,
    )
    switched = s0 * m_final[:, 2] < SWITCH_THRESHOLD
    return BlockResult(switched, switch_step, m_final, m_initial, rec if record else None)


def simulate_pulse(dev: DeviceParams, pulse: PulseSpec, initial_state: str,
                   rng: np.random.Generator, record: bool = False,
                   initial_theta: Optional[float] = None) -> Trajectory:
    """Simulate one pulse from a thermally sampled start in ``initial_state``.

    Without ``record`` only the start and end points are kept in the trajectory.
    """
    res = simulate_block(dev, pulse, initial_state, [rng], record=record,
                         initial_theta=initial_theta)
    n_steps = pulse.n_steps
    if record:
        t = np.arange(n_steps + 1) * pulse.dt
        m = res.record[0]
    else:
        t = np.array([0.0, n_steps * pulse.dt])
        m = np.stack([res.m_initial[0], res.m_final[0]])
    switched = bool(res.switched[0])
    step = int(res.switch_step[0])
    return Trajectory(
        t=t,
        m=m,
        switched=switched,
        switch_time=step * pulse.dt if switched else None,
        initial_state=initial_state,
    )
