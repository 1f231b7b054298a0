import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from cramsim import physics
from cramsim.llg import (PulseSpec, SimulationError, Trajectory, _Coefficients, _heun,
                         invert_initial_angle, llg_step, sample_initial_angle, simulate_block,
                         simulate_pulse, trial_generator)
from cramsim.physics import CONST, DeviceParams


@pytest.fixture(scope="module")
def dev():
    return DeviceParams().calibrated()


@pytest.fixture(scope="module")
def quiet():
    return DeviceParams(thermal_sigma=0.0).calibrated()


def _critical_voltage(d):
    kz = 2 * d.k_int0 / (d.ms * d.t_f) - CONST.mu0 * d.ms
    stt = CONST.hbar * physics.spin_polarization(d) / (2 * CONST.e_charge * d.t_f * d.ms)
    return kz, d.alpha * kz * physics.resistance(d, "P") * d.area / stt


def test_pulse_spec_counts():
    p = PulseSpec(0.5, 1e-9, 1e-12, 2e-9)
    assert (p.n_pulse_steps, p.n_relax_steps, p.n_steps) == (1000, 2000, 3000)
    with pytest.raises(ValueError):
        PulseSpec(0.5, -1e-9)
    with pytest.raises(ValueError):
        PulseSpec(0.5, 1e-9, dt=0.0)


def test_recorded_trajectory_shape_and_norm(dev):
    p = PulseSpec(0.8, 1e-9, 1e-12, 2e-9)
    tr = simulate_pulse(dev, p, "P", trial_generator(1, 0, 0, 0), record=True)
    assert tr.m.shape == (3001, 3)
    assert tr.t[-1] == pytest.approx(3e-9)
    assert np.allclose(np.linalg.norm(tr.m, axis=1), 1.0, atol=1e-12)


def test_kernel_matches_reference_heun(dev):
    """The compiled block integrator reproduces a step-by-step numpy integration."""
    p = PulseSpec(0.6, 0.2e-9, 1e-12, 0.1e-9)
    res = simulate_block(dev, p, "P", [trial_generator(9, 0, 0, 0)], record=True)
    rng = trial_generator(9, 0, 0, 0)
    theta = invert_initial_angle(physics.thermal_stability(dev), rng.random())
    phi = 2 * math.pi * rng.random()
    noise = physics.thermal_field_sigma(dev, p.dt) * rng.standard_normal((p.n_steps, 3))
    m = (math.sin(theta) * math.cos(phi), math.sin(theta) * math.sin(phi), math.cos(theta))
    c_on, c_off = _Coefficients.build(dev, p.amplitude), _Coefficients.build(dev, 0.0)
    ref = [m]
    for k in range(p.n_steps):
        c = c_on if k < p.n_pulse_steps else c_off
        m = _heun(c, *m, *noise[k], p.dt)
        ref.append(m)
    assert np.allclose(res.record[0], np.array(ref), rtol=0, atol=1e-12)


def test_single_step_api(dev):
    m = llg_step(dev, (0.0, 0.0, 1.0), 0.0, 0.0, 1e-12, rng=trial_generator(0, 1))
    assert np.linalg.norm(m) == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(SimulationError):
        llg_step(dev, (0.0, 0.0, 1.0), 0.0, 0.0, 1e-12)
    with pytest.raises(SimulationError):
        llg_step(dev, (0.0, 0.0, 2.0), 0.0, 0.0, 1e-12, rng=trial_generator(0, 1))


def test_easy_axis_is_fixed_point_without_noise(quiet):
    m = llg_step(quiet, (0.0, 0.0, 1.0), 0.0, 0.0, 1e-12)
    assert tuple(m) == (0.0, 0.0, 1.0)
    p = PulseSpec(0.0, 1e-9, 1e-12, 1e-9)
    tr = simulate_pulse(quiet, p, "AP", trial_generator(0), initial_theta=0.0)
    assert tuple(tr.m[-1]) == (0.0, 0.0, -1.0)


def test_damping_relaxes_towards_easy_axis(quiet):
    p = PulseSpec(0.0, 1e-12, 1e-12, 3e-9)
    tr = simulate_pulse(quiet, p, "P", trial_generator(0), record=True, initial_theta=0.3)
    assert np.all(np.diff(tr.m[:, 2]) >= -1e-15)
    assert tr.m[-1, 2] > 0.999
    assert not tr.switched


@pytest.mark.parametrize("fraction", [0.0, 0.5, 1.5])
def test_small_angle_growth_rate(quiet, fraction):
    """Cone angle evolves as exp(gamma' (b_J - alpha B_k) t) near the easy axis."""
    kz, vc = _critical_voltage(quiet)
    p = PulseSpec(fraction * vc, 2e-9, 1e-12, 1e-12)
    res = simulate_block(quiet, p, "P", [trial_generator(0)], record=True, initial_theta=1e-3)
    m = res.record[0][: p.n_pulse_steps + 1]
    theta = np.arccos(np.clip(m[:, 2], -1, 1))
    rate = math.log(theta[-1] / theta[0]) / (p.n_pulse_steps * p.dt)
    gp = CONST.gamma / (1 + quiet.alpha**2)
    assert rate == pytest.approx(gp * quiet.alpha * kz * (fraction - 1), rel=5e-3)
    phase = np.unwrap(np.arctan2(m[:, 1], m[:, 0]))
    omega = abs(phase[-1] - phase[0]) / (p.n_pulse_steps * p.dt)
    assert omega == pytest.approx(gp * kz, rel=2e-3)


def test_critical_voltage_separates_switching(quiet):
    _, vc = _critical_voltage(quiet)
    out = []
    for f in (0.95, 1.1):
        p = PulseSpec(f * vc, 100e-9, 1e-12, 2e-9)
        out.append(simulate_block(quiet, p, "P", [trial_generator(0)], initial_theta=0.05)
                   .switched[0])
    assert out == [False, True]


def test_polarity_ap_to_p(dev):
    p = PulseSpec(-1.2, 1e-9, 1e-12, 2e-9)
    rngs = [trial_generator(3, 0, 0, t) for t in range(20)]
    assert simulate_block(dev, p, "AP", rngs).switched.mean() > 0.9
    wrong = simulate_block(dev, p.with_amplitude(1.2), "AP", rngs).switched
    assert not wrong.any()


def test_no_thermal_switching_at_zero_bias(dev):
    p = PulseSpec(0.0, 1e-9, 1e-12, 2e-9)
    rngs = [trial_generator(4, 0, 0, t) for t in range(200)]
    assert not simulate_block(dev, p, "P", rngs).switched.any()


def test_zero_temperature_block():
    d = DeviceParams(temperature=0.0, k_int0=5.2e-4)
    res = simulate_block(d, PulseSpec(1.5, 1e-9), "P", [trial_generator(0)])
    assert res.m_initial[0, 2] == 1.0


def test_streams_are_deterministic_and_distinct(dev):
    p = PulseSpec(0.5, 1e-9, 1e-12, 2e-9)
    a = simulate_block(dev, p, "P", [trial_generator(5, 0, 0, t) for t in range(8)])
    b = simulate_block(dev, p, "P", [trial_generator(5, 0, 0, t) for t in range(8)])
    assert np.array_equal(a.m_final, b.m_final)
    assert len({tuple(m) for m in a.m_final}) == 8


def test_block_split_does_not_matter(dev):
    p = PulseSpec(0.5, 0.5e-9, 1e-12, 0.5e-9)
    keys = [(2, 0, 0, t) for t in range(6)]
    whole = simulate_block(dev, p, "P", [trial_generator(*k) for k in keys])
    parts = [simulate_block(dev, p, "P", [trial_generator(*k) for k in keys[i:i + 2]])
             for i in (0, 2, 4)]
    assert np.array_equal(whole.m_final, np.vstack([r.m_final for r in parts]))


def test_uncalibrated_device_rejected():
    with pytest.raises(SimulationError):
        simulate_block(DeviceParams(), PulseSpec(0.5), "P", [trial_generator(0)])


def test_trajectory_csv(tmp_path, dev):
    tr = simulate_pulse(dev, PulseSpec(0.8, 0.01e-9, 1e-12, 0.01e-9), "P",
                        trial_generator(0), record=True)
    path = tmp_path / "t.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t_s,mx,my,mz"
    assert len(lines) == 22
    assert isinstance(tr, Trajectory)


# ---------------------------------------------------------------------------
# initial angle

def _density(theta, delta):
    return np.sin(theta) * np.exp(-delta * np.sin(theta) ** 2)


@given(st.floats(1.0, 200.0), st.floats(0.0, 0.999999))
def test_angle_inverse_in_range(delta, r):
    th = float(invert_initial_angle(delta, r))
    assert 0.0 <= th <= math.pi / 2 + 1e-12


@given(st.floats(1.0, 200.0), st.floats(0.0, 0.99), st.floats(0.0, 0.99))
def test_angle_inverse_monotone(delta, a, b):
    lo, hi = sorted((a, b))
    assert invert_initial_angle(delta, lo) <= invert_initial_angle(delta, hi)


@pytest.mark.parametrize("delta", [5.0, 45.7])
def test_angle_cdf_matches_quadrature(delta):
    norm = integrate.quad(_density, 0, math.pi / 2, args=(delta,))[0]
    for r in (0.1, 0.5, 0.9, 0.99):
        th = float(invert_initial_angle(delta, r))
        got = integrate.quad(_density, 0, th, args=(delta,))[0] / norm
        assert got == pytest.approx(r, abs=1e-9)


def test_sample_shape_and_scalar():
    rng = np.random.default_rng(0)
    assert isinstance(sample_initial_angle(45.7, rng), float)
    assert sample_initial_angle(45.7, rng, size=7).shape == (7,)
    with pytest.raises(ValueError):
        invert_initial_angle(0.0, 0.5)


def test_small_sample_goodness_of_fit():
    delta = 20.0
    th = sample_initial_angle(delta, np.random.default_rng(1), size=20000)
    norm = integrate.quad(_density, 0, math.pi / 2, args=(delta,))[0]

    def cdf(x):
        return np.array([integrate.quad(_density, 0, t, args=(delta,))[0] / norm for t in x])

    assert stats.kstest(th, cdf).pvalue > 0.01


def test_effective_field_at_rest(dev):
    from cramsim.llg import effective_field

    h = effective_field(dev, (0.0, 0.0, 1.0), 0.0)
    assert h[:2].tolist() == [0.0, 0.0]
    assert h[2] == pytest.approx(2.09e5, rel=3e-3)


@pytest.mark.parametrize("delta", [45.7, 200.0])
def test_angle_tail_is_thin(delta):
    norm = integrate.quad(_density, 0, math.pi / 2, args=(delta,))[0]
    tail = integrate.quad(_density, 3 / math.sqrt(delta), math.pi / 2, args=(delta,))[0] / norm
    assert tail < 0.02
    th = sample_initial_angle(delta, np.random.default_rng(2), size=20000)
    assert np.mean(th > 3 / math.sqrt(delta)) < 0.02
