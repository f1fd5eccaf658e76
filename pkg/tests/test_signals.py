"""Filter and sinusoid unit tests."""

import math

import numpy as np
import pytest

from escsim.signals import HIGHPASS, LOWPASS, FirstOrderFilter, sinusoid


def run_filter(filt, u_fn, dt, duration):
    out = []
    n = round(duration / dt)
    for k in range(n):
        out.append(filt.step(u_fn(k * dt), dt))
    return np.array(out)


def test_lowpass_unit_dc_gain():
    filt = FirstOrderFilter(1.0, LOWPASS, state=0.0)
    out = run_filter(filt, lambda t: 5.0, 0.01, 20.0)
    assert abs(out[-1] - 5.0) < 1e-3


def test_highpass_dc_rejection():
    filt = FirstOrderFilter(1.0, HIGHPASS, state=0.0)
    out = run_filter(filt, lambda t: 5.0, 0.01, 20.0)
    assert abs(out[-1]) < 1e-3


def test_lowpass_response_at_cutoff():
    """At the cutoff frequency a first-order lag has gain 1/sqrt(2), -45 deg.

    Oracle: the continuous transfer function w/(jw + w); the discrete run
    must land within 2% / 2 degrees of it.
    """
    dt = 0.001
    filt = FirstOrderFilter(1.0, LOWPASS, state=0.0)
    out = run_filter(filt, lambda t: math.sin(t), dt, 60.0)
    t = np.arange(len(out)) * dt
    # Quadrature fit over exactly four periods, after the transient dies.
    steady = (t >= 10.0 * math.pi) & (t < 18.0 * math.pi)
    ref_sin, ref_cos = np.sin(t[steady]), np.cos(t[steady])
    a = 2.0 * np.mean(out[steady] * ref_sin)
    b = 2.0 * np.mean(out[steady] * ref_cos)
    amplitude = math.hypot(a, b)
    phase = math.degrees(math.atan2(b, a))
    assert amplitude == pytest.approx(1.0 / math.sqrt(2.0), rel=0.02)
    assert phase == pytest.approx(-45.0, abs=2.0)


@pytest.mark.parametrize("cutoff", [0.1, 0.5, 1.0, 3.0, 10.0])
def test_lowpass_decay_rate_matches_cutoff(cutoff):
    """Step-response error decays exponentially at the cutoff rate."""
    dt = min(0.01, 0.05 / cutoff)
    tau = 1.0 / cutoff
    filt = FirstOrderFilter(cutoff, LOWPASS, state=0.0)
    out = run_filter(filt, lambda t: 1.0, dt, 5.0 * tau)
    t = np.arange(1, len(out) + 1) * dt
    window = (t >= tau) & (t <= 4.0 * tau)
    log_err = np.log(1.0 - out[window])
    slope = np.polyfit(t[window], log_err, 1)[0]
    assert -slope == pytest.approx(cutoff, rel=0.05)


def test_highpass_plus_lowpass_reconstructs_input():
    """The two realizations share one state: hp(u) + lp(u) == u, and the
    lagged copy u - hp(u) is exactly the lowpass output."""
    rng = np.random.default_rng(42)
    hp = FirstOrderFilter(2.0, HIGHPASS, state=0.3)
    lp = FirstOrderFilter(2.0, LOWPASS, state=0.3)
    dt = 0.01
    for k in range(2000):
        u = math.sin(0.7 * k * dt) + 0.1 * rng.normal()
        y_hp = hp.step(u, dt)
        y_lp = lp.step(u, dt)
        assert abs((y_hp + y_lp) - u) < 1e-9
        assert abs((u - y_hp) - y_lp) < 1e-9


def test_filter_step_deterministic():
    a = FirstOrderFilter(1.3, LOWPASS, state=0.25)
    b = FirstOrderFilter(1.3, LOWPASS, state=0.25)
    for k in range(100):
        u = math.sin(0.3 * k)
        assert a.step(u, 0.02) == b.step(u, 0.02)


def test_warm_start_suppresses_transient():
    filt = FirstOrderFilter(1.0, HIGHPASS)
    assert filt.step(7.5, 0.02) == 0.0
    lp = FirstOrderFilter(1.0, LOWPASS)
    assert lp.step(7.5, 0.02) == 7.5


def test_euler_variant_tracks_zoh_at_small_dt():
    zoh = FirstOrderFilter(1.0, LOWPASS, state=0.0)
    euler = FirstOrderFilter(1.0, LOWPASS, state=0.0)
    dt = 1e-4
    for k in range(5000):
        u = math.sin(k * dt)
        y0 = zoh.step(u, dt)
        y1 = euler.step_euler(u, dt)
    assert y0 == pytest.approx(y1, abs=1e-4)


def test_filter_argument_validation():
    with pytest.raises(ValueError):
        FirstOrderFilter(0.0, LOWPASS)
    with pytest.raises(ValueError):
        FirstOrderFilter(1.0, "bandpass")
    filt = FirstOrderFilter(1.0, LOWPASS, state=0.0)
    with pytest.raises(ValueError):
        filt.step(float("nan"), 0.01)
    with pytest.raises(ValueError):
        filt.step(1.0, 0.0)
    with pytest.raises(ValueError):
        filt.step(1.0, -0.1)
    with pytest.raises(ValueError):
        filt.step(1.0, 1.5)  # dt * cutoff >= 1


def test_sinusoid_values():
    assert sinusoid(0.5, 1.0, 0.0) == 0.0
    assert sinusoid(0.5, 1.0, math.pi / 2.0) == pytest.approx(0.5)
    assert sinusoid(10.0, 0.5, math.pi) == pytest.approx(10.0)
    with pytest.raises(ValueError):
        sinusoid(1.0, 0.0, 1.0)
