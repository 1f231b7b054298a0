"""Macrospin STT+VCMA switching and CRAM logic error-rate simulation."""

__version__ = "0.1.0"

from .physics import CONST, DeviceParams, PhysConstants  # noqa: E402
from .llg import PulseSpec, Trajectory, simulate_pulse  # noqa: E402
from .sptc import Sptc, SptcEstimator, run_sptc  # noqa: E402
from .cram import GATES, GateSpec, get_gate  # noqa: E402

__all__ = [
    "CONST", "DeviceParams", "PhysConstants", "PulseSpec", "Trajectory", "simulate_pulse",
    "Sptc", "SptcEstimator", "run_sptc", "GATES", "GateSpec", "get_gate",
]
