"""Device parameters and closed-form material/transport laws for a perpendicular MTJ.

All quantities are SI. Fields returned by this module are in A/m unless the
function name says otherwise (``thermal_field_sigma`` returns tesla).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import constants as _sc


@dataclass(frozen=True)
class PhysConstants:
    k_b: float = _sc.k
    mu0: float = _sc.mu_0
    gamma: float = _sc.physical_constants["electron gyromag. ratio"][0]  # rad/(s T)
    hbar: float = _sc.hbar
    e_charge: float = _sc.e


CONST = PhysConstants()

PINNED_SIGMA_T = 4.5e-3


class PhysicsError(ValueError):
    """Invalid physical parameter combination."""


class ZeroTemperatureError(PhysicsError):
    """A quantity normalised by k_B*T was requested at T = 0."""


@dataclass(frozen=True)
class DeviceParams:
    """Physical description of one MTJ.

    ``k_int0`` is normally left as ``None`` and filled in by :meth:`calibrated`
    from ``tsf_target``. ``thermal_sigma`` pins the per-component thermal field
    standard deviation (tesla); set it to ``None`` to derive it from the
    fluctuation-dissipation law instead.
    """

    lx: float = 45e-9
    ly: float = 45e-9
    t_f: float = 0.75e-9
    t_ox: float = 1e-9
    t_c: float = 1.5e-9  # stored, not used by any law
    ra_p: float = 5e-12  # 5 Ohm um^2
    ms0: float = 9.5e5
    p0: float = 0.54
    alpha: float = 0.02
    xi: float = 0.0
    k_int0: Optional[float] = None
    tsf_target: float = 45.7
    alpha_sp: float = 2e-5
    v0: float = 0.6
    h_ext: tuple = (0.0, 0.0, 0.0)
    temperature: float = 300.0
    tmr_override: Optional[float] = None
    thermal_sigma: Optional[float] = PINNED_SIGMA_T

    def __post_init__(self):
        for name in ("lx", "ly", "t_f", "t_ox", "t_c", "ra_p", "ms0", "alpha", "v0"):
            val = getattr(self, name)
            if not np.isfinite(val) or val <= 0:
                raise PhysicsError(f"{name} must be > 0, got {val!r}")
        if not 0 < self.p0 < 1:
            raise PhysicsError(f"p0 must lie in (0, 1), got {self.p0!r}")
        if self.temperature < 0:
            raise PhysicsError(f"temperature must be >= 0, got {self.temperature!r}")
        if self.tsf_target <= 0:
            raise PhysicsError(f"tsf_target must be > 0, got {self.tsf_target!r}")
        if self.alpha_sp < 0:
            raise PhysicsError(f"alpha_sp must be >= 0, got {self.alpha_sp!r}")
        if self.tmr_override is not None and not self.tmr_override > 0:
            raise PhysicsError(f"tmr_override must be > 0, got {self.tmr_override!r}")
        if self.thermal_sigma is not None and self.thermal_sigma < 0:
            raise PhysicsError(f"thermal_sigma must be >= 0, got {self.thermal_sigma!r}")
        if len(self.h_ext) != 3:
            raise PhysicsError("h_ext must be a 3-vector")
        object.__setattr__(self, "h_ext", tuple(float(h) for h in self.h_ext))

    @property
    def ms(self) -> float:
        # no Ms(T) law: Ms = Ms(0 K) at every temperature
        return self.ms0

    @property
    def area(self) -> float:
        return self.lx * self.ly

    @property
    def volume(self) -> float:
        return self.lx * self.ly * self.t_f

    @property
    def is_calibrated(self) -> bool:
        return self.k_int0 is not None

    def replace(self, **changes) -> "DeviceParams":
        return dataclasses.replace(self, **changes)

    def calibrated(self) -> "DeviceParams":
        """Copy with ``k_int0`` set so that the zero-bias barrier equals ``tsf_target``."""
        return self.replace(k_int0=calibrate_zero_bias_anisotropy(self))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["h_ext"] = list(self.h_ext)
        return d


def _k_int0(dev: DeviceParams) -> float:
    if dev.k_int0 is None:
        raise PhysicsError("device is not calibrated; call DeviceParams.calibrated()")
    return dev.k_int0


def demag_energy_density(dev: DeviceParams) -> float:
    """Thin-film shape anisotropy per unit area, mu0 Ms^2 t_f / 2 (J/m^2)."""
    return 0.5 * CONST.mu0 * dev.ms**2 * dev.t_f


def interfacial_anisotropy(dev: DeviceParams, v):
    """Interfacial anisotropy energy density K_int(v) = K_int0 - xi v / t_ox, J/m^2.

    Can go negative at large bias; nothing here clamps it.
    """
    return _k_int0(dev) - dev.xi * np.asarray(v, dtype=float) / dev.t_ox


def thermal_stability(dev: DeviceParams, v=0.0):
    if dev.temperature == 0:
        raise ZeroTemperatureError("thermal stability factor is undefined at T = 0")
    k_eff = interfacial_anisotropy(dev, v) - demag_energy_density(dev)
    return k_eff * dev.area / (CONST.k_b * dev.temperature)


def calibrate_zero_bias_anisotropy(dev: DeviceParams) -> float:
    if dev.temperature <= 0:
        raise ZeroTemperatureError("calibration needs T > 0")
    return dev.tsf_target * CONST.k_b * dev.temperature / dev.area + demag_energy_density(dev)


def thermal_field_sigma(dev: DeviceParams, dt: float) -> float:
    """Per-component standard deviation of the thermal field for step ``dt``, in tesla."""
    if not dt > 0:
        raise PhysicsError(f"dt must be > 0, got {dt!r}")
    if dev.temperature == 0:
        return 0.0
    if dev.thermal_sigma is not None:
        return float(dev.thermal_sigma)
    # mu0*H form of sqrt(2 alpha kT / (mu0 gamma0 Ms V dt)), gamma0 = mu0*gamma
    return float(
        np.sqrt(
            2.0 * CONST.k_b * dev.alpha * dev.temperature
            / (CONST.gamma * dev.volume * dev.ms * dt)
        )
    )


def spin_polarization(dev: DeviceParams, t: Optional[float] = None) -> float:
    """Temperature-corrected polarization P0 (1 - alpha_sp T^1.5)."""
    t = dev.temperature if t is None else t
    return dev.p0 * (1.0 - dev.alpha_sp * t**1.5)


def tmr_ratio(dev: DeviceParams, t: Optional[float] = None, v=0.0):
    """Bias- and temperature-dependent TMR ratio (modified Julliere).

    With ``tmr_override`` set, the zero-bias value is replaced but the bias
    roll-off 1/(1 + (v/v0)^2) is kept.
    """
    t = dev.temperature if t is None else t
    v = np.asarray(v, dtype=float)
    rolloff = 1.0 / (1.0 + (v / dev.v0) ** 2)
    if dev.tmr_override is not None:
        return dev.tmr_override * rolloff
    pt2 = spin_polarization(dev, t) ** 2
    denom = 1.0 - pt2
    if denom <= 0:
        raise PhysicsError("Julliere denominator 1 - P(T)^2 must be positive")
    return 2.0 * pt2 / denom * rolloff


def resistance(dev: DeviceParams, state: str, t: Optional[float] = None, v=0.0):
    """Two-terminal resistance of the junction in state ``'P'`` or ``'AP'``."""
    r_p = dev.ra_p / dev.area
    if state == "P":
        return np.full(np.shape(v), r_p) if np.ndim(v) else r_p
    if state == "AP":
        return r_p * (1.0 + tmr_ratio(dev, t, v))
    raise ValueError(f"state must be 'P' or 'AP', got {state!r}")


def anisotropy_field(dev: DeviceParams, v, m_z):
    """Perpendicular anisotropy field (0, 0, 2 K_int(v) m_z / (mu0 Ms t_f)), A/m."""
    m_z = np.asarray(m_z, dtype=float)
    if np.any(np.abs(m_z) > 1 + 1e-9):
        raise PhysicsError("|m_z| must not exceed 1")
    hz = 2.0 * interfacial_anisotropy(dev, v) / (CONST.mu0 * dev.ms * dev.t_f) * m_z
    zeros = np.zeros_like(hz)
    return np.stack([zeros, zeros, hz], axis=-1)


def demag_field(dev: DeviceParams, m):
    """Thin-film demagnetizing field (0, 0, -Ms m_z), A/m."""
    m = np.asarray(m, dtype=float)
    norm = np.linalg.norm(m, axis=-1)
    if np.any(np.abs(norm - 1.0) > 1e-6):
        raise PhysicsError("m must be a unit vector")
    hz = -dev.ms * m[..., 2]
    zeros = np.zeros_like(hz)
    return np.stack([zeros, zeros, hz], axis=-1)


def barrier_from_fields(dev: DeviceParams, v=0.0):
    """Energy barrier mu0 Ms H_K,net V_F / 2 from the field picture, joules."""
    h_net = anisotropy_field(dev, v, 1.0)[2] + demag_field(dev, (0.0, 0.0, 1.0))[2]
    return 0.5 * CONST.mu0 * dev.ms * h_net * dev.volume
