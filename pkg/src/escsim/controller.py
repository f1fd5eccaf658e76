"""Multivariable extremum seeking controller with optional adaptive step size.

Each channel runs the classic perturb / demodulate pipeline: a sinusoid is
added to the channel setpoint, the measured cost is high-pass filtered to
strip its slow trend, multiplied by the same sinusoid, and low-pass filtered
into a gradient estimate q.  The integrator then descends that gradient.

The adaptive variant inserts a step-size adapter between the low-pass filter
and the integrator: m tracks the second moment of q through a first-order
low-pass (mdot = gamma * (q^2 - m)) and the integrator is driven by
g = q / sqrt(m + epsilon) instead of q.  The standard variant feeds q to the
integrator directly and leaves m untouched at zero.

All angles are radians and all frequencies rad/s.  One controller instance
must be stepped sequentially; separate instances share nothing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .signals import HIGHPASS, LOWPASS, FirstOrderFilter, sinusoid

STANDARD = "standard"
ADAPTIVE = "adaptive"

# Floor inside the adapter's square root, in cost^2 units.  Sized near the
# converged gradient-estimate noise floor at the plant's cost scales: once q
# falls to its parked ripple the normalization bottoms out instead of
# amplifying noise to a full-size step, which keeps the parked setpoint from
# random-walking out of its convergence band.
DEFAULT_EPSILON = 1e-2

# Duplicate-frequency detection tolerance (relative).
_FREQ_RTOL = 1e-9


@dataclass(frozen=True)
class ChannelParams:
    """Per-channel gains and frequencies.

    perturb_amp may be zero (disables excitation) and gain may be zero
    (freezes the integrator); both degenerate settings are exercised by the
    property tests.  Frequencies and epsilon must be strictly positive.
    """

    perturb_amp: float
    perturb_freq: float
    highpass_cutoff: float
    lowpass_cutoff: float
    gain: float
    adapter_cutoff: float = 0.5
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if self.perturb_amp < 0.0:
            raise ValueError(f"perturb_amp must be >= 0, got {self.perturb_amp}")
        if self.gain < 0.0:
            raise ValueError(f"gain must be >= 0, got {self.gain}")
        for name in ("perturb_freq", "highpass_cutoff", "lowpass_cutoff",
                     "adapter_cutoff", "epsilon"):
            value = getattr(self, name)
            if not math.isfinite(value) or value <= 0.0:
                raise ValueError(f"{name} must be positive and finite, got {value}")


@dataclass(frozen=True)
class EscParams:
    """Full controller configuration: one ChannelParams per seeking variable."""

    channels: tuple[ChannelParams, ...]
    variant: str = ADAPTIVE

    def __post_init__(self):
        if self.variant not in (STANDARD, ADAPTIVE):
            raise ValueError(f"variant must be '{STANDARD}' or '{ADAPTIVE}', got {self.variant!r}")
        if len(self.channels) == 0:
            raise ValueError("at least one channel is required")
        object.__setattr__(self, "channels", tuple(self.channels))
        freqs = [c.perturb_freq for c in self.channels]
        for i in range(len(freqs)):
            for j in range(i + 1, len(freqs)):
                if math.isclose(freqs[i], freqs[j], rel_tol=_FREQ_RTOL):
                    raise ValueError(
                        f"channels {i} and {j} share perturbation frequency {freqs[i]}; "
                        "multivariable seeking needs distinct frequencies"
                    )

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def slowest_period(self) -> float:
        return 2.0 * math.pi / min(c.perturb_freq for c in self.channels)


@dataclass
class ChannelState:
    """Mutable per-channel pipeline state."""

    r_hat: float
    hp: FirstOrderFilter
    lp: FirstOrderFilter
    m: float = 0.0
    adapter_initialized: bool = False
    # Running accumulator for the adapter warm-up window.
    warmup_sum_q2: float = 0.0
    warmup_samples: int = 0
    # Latest pipeline outputs, kept for tracing.
    q: float = 0.0
    g: float = 0.0

    @classmethod
    def initial(cls, params: ChannelParams, r_hat0: float) -> "ChannelState":
        return cls(
            r_hat=float(r_hat0),
            hp=FirstOrderFilter(params.highpass_cutoff, HIGHPASS),
            lp=FirstOrderFilter(params.lowpass_cutoff, LOWPASS, state=0.0),
        )


@dataclass
class EscState:
    """Controller state: per-channel states plus the shared clock."""

    channels: list[ChannelState]
    t: float = 0.0


def adapter_step(m: float, q: float, gamma: float, epsilon: float,
                 dt: float) -> tuple[float, float]:
    """One step of the second-moment tracker and normalizer.

    Integrates mdot = gamma * (q^2 - m) with the same exact zero-order-hold
    update as the low-pass filter, then returns (m_next, q / sqrt(m_next +
    epsilon)).  m_next stays non-negative for any finite q because the update
    is a convex combination of m and q^2.
    """
    if m < 0.0:
        raise ValueError(f"m must be >= 0, got {m}")
    if gamma <= 0.0 or epsilon <= 0.0 or dt <= 0.0:
        raise ValueError("gamma, epsilon and dt must be positive")
    if not math.isfinite(q):
        raise ValueError(f"q must be finite, got {q}")
    alpha = 1.0 - math.exp(-gamma * dt)
    m_next = m + alpha * (q * q - m)
    g = q / math.sqrt(m_next + epsilon)
    return m_next, g


def channel_step(params: ChannelParams, state: ChannelState, y: float, t: float,
                 dt: float, variant: str, integrate: bool = True) -> ChannelState:
    """Advance one channel through the demodulation pipeline.

    ``t`` is the orchestrator clock used for the demodulation sinusoid (the
    same clock generates the perturbation, so the relative phase is zero).
    ``integrate=False`` freezes the integrator, which the adaptive warm-up
    uses while it collects q^2 samples.  The state is updated in place and
    returned.
    """
    if not math.isfinite(y):
        raise ValueError(f"cost sample must be finite, got {y}")
    high = state.hp.step(y, dt)
    xi = high * math.sin(params.perturb_freq * t)
    state.q = state.lp.step(xi, dt)

    if variant == ADAPTIVE and state.adapter_initialized:
        state.m, state.g = adapter_step(
            state.m, state.q, params.adapter_cutoff, params.epsilon, dt)
        drive = state.g
    elif variant == ADAPTIVE:
        # Warm-up: accumulate the second moment, leave the setpoint alone.
        state.warmup_sum_q2 += state.q * state.q
        state.warmup_samples += 1
        state.g = 0.0
        drive = 0.0
        integrate = False
    else:
        state.g = 0.0
        drive = state.q

    if integrate:
        state.r_hat -= params.gain * drive * dt
    return state


def esc_outputs(params: EscParams, state: EscState) -> np.ndarray:
    """Perturbed references r_i = r_hat_i + a_i*sin(w_i*t) at the state's clock."""
    t = state.t
    return np.array([
        c.r_hat + p.perturb_amp * math.sin(p.perturb_freq * t)
        for p, c in zip(params.channels, state.channels)
    ])


def esc_step(params: EscParams, state: EscState, y: float,
             dt: float) -> tuple[EscState, np.ndarray]:
    """Step every channel with the shared cost sample y; advance the clock.

    The adaptive variant holds every integrator frozen for the first full
    period of the slowest perturbation, then seeds each channel's m with the
    mean of q^2 over that window before enabling descent.  The standard
    variant integrates from the first sample.  Returns the (mutated) state
    and the new perturbed references.
    """
    if dt <= 0.0 or not math.isfinite(dt):
        raise ValueError(f"dt must be positive and finite, got {dt}")
    state.t += dt
    if params.variant == ADAPTIVE and state.t >= params.slowest_period():
        for c in state.channels:
            if not c.adapter_initialized:
                if c.warmup_samples > 0:
                    c.m = c.warmup_sum_q2 / c.warmup_samples
                c.adapter_initialized = True
    for p, c in zip(params.channels, state.channels):
        channel_step(p, c, y, state.t, dt, params.variant)
    return state, esc_outputs(params, state)


class EscController:
    """Convenience wrapper binding EscParams to an EscState."""

    def __init__(self, params: EscParams, initial_setpoints):
        initial = [float(v) for v in initial_setpoints]
        if len(initial) != params.n_channels:
            raise ValueError(
                f"expected {params.n_channels} initial setpoints, got {len(initial)}")
        self.params = params
        self.state = EscState(
            channels=[ChannelState.initial(c, r0)
                      for c, r0 in zip(params.channels, initial)],
        )

    @property
    def t(self) -> float:
        return self.state.t

    @property
    def r_hat(self) -> np.ndarray:
        return np.array([c.r_hat for c in self.state.channels])

    def outputs(self) -> np.ndarray:
        return esc_outputs(self.params, self.state)

    def step(self, y: float, dt: float) -> np.ndarray:
        """Consume one cost sample, advance the clock, return the new references."""
        _, r = esc_step(self.params, self.state, y, dt)
        return r


@dataclass(frozen=True)
class PrimedChannelParams:
    """Normalized per-channel constants used by the stability analysis.

    The concrete channel parameters factor as w_i = omega*w_i', cutoffs and
    gains as omega*delta*(constant)'; this type carries the primed constants
    together with the (unscaled) perturbation amplitude and epsilon.
    """

    perturb_amp: float
    perturb_freq: float
    highpass_cutoff: float
    lowpass_cutoff: float
    gain: float
    adapter_cutoff: float
    epsilon: float = DEFAULT_EPSILON


def scaled_params(omega: float, delta: float, primed, variant: str = ADAPTIVE) -> EscParams:
    """Build concrete controller parameters from primed constants.

    Applies the time-scale factoring: perturbation frequencies scale with
    omega alone, while filter cutoffs, integrator gains, and adapter cutoffs
    scale with omega*delta.
    """
    if omega <= 0.0 or delta <= 0.0:
        raise ValueError("omega and delta must be positive")
    channels = []
    for p in primed:
        for name in ("perturb_freq", "highpass_cutoff", "lowpass_cutoff",
                     "gain", "adapter_cutoff"):
            if getattr(p, name) <= 0.0:
                raise ValueError(f"primed constant {name} must be positive")
        channels.append(ChannelParams(
            perturb_amp=p.perturb_amp,
            perturb_freq=omega * p.perturb_freq,
            highpass_cutoff=omega * delta * p.highpass_cutoff,
            lowpass_cutoff=omega * delta * p.lowpass_cutoff,
            gain=omega * delta * p.gain,
            adapter_cutoff=omega * delta * p.adapter_cutoff,
            epsilon=p.epsilon,
        ))
    return EscParams(channels=tuple(channels), variant=variant)


def lint_params(params: EscParams, plant_bandwidth: float) -> list[str]:
    """Advisory checks of the tuning guidelines; returns warning strings.

    Flags perturbation frequencies that are not slow against the closed-loop
    plant, high-pass cutoffs below / low-pass cutoffs above their channel's
    perturbation frequency, and frequency pairs that coincide or sit on an
    odd harmonic of each other.  Odd harmonics are flagged because a cubic
    cost term puts in-phase content of channel j exactly on channel i's
    demodulation frequency; even ratios only couple through phase lag and
    are accepted (the reference tuning itself uses a 2:1 ratio).
    """
    warnings: list[str] = []
    for i, c in enumerate(params.channels):
        if c.perturb_freq >= plant_bandwidth:
            warnings.append(
                f"channel {i}: perturbation frequency {c.perturb_freq:g} rad/s is not "
                f"below the plant bandwidth {plant_bandwidth:g} rad/s")
        if c.highpass_cutoff < c.perturb_freq:
            warnings.append(
                f"channel {i}: highpass cutoff {c.highpass_cutoff:g} rad/s below "
                f"perturbation frequency {c.perturb_freq:g} rad/s")
        if c.lowpass_cutoff > c.perturb_freq:
            warnings.append(
                f"channel {i}: lowpass cutoff {c.lowpass_cutoff:g} rad/s above "
                f"perturbation frequency {c.perturb_freq:g} rad/s")
    for i in range(params.n_channels):
        for j in range(i + 1, params.n_channels):
            wi = params.channels[i].perturb_freq
            wj = params.channels[j].perturb_freq
            if math.isclose(wi, wj, rel_tol=1e-6):
                warnings.append(
                    f"channels {i} and {j}: duplicate perturbation frequency {wi:g} rad/s")
                continue
            hi, lo = max(wi, wj), min(wi, wj)
            ratio = hi / lo
            nearest = round(ratio)
            if nearest >= 3 and nearest % 2 == 1 and math.isclose(ratio, nearest, rel_tol=1e-6):
                warnings.append(
                    f"channels {i} and {j}: frequencies {wi:g} and {wj:g} rad/s are odd "
                    f"harmonics (ratio {nearest}); demodulation cross-talk risk")
    return warnings


def wrap_half_turn(angle: float) -> float:
    """Wrap an angle into (-pi/2, pi/2]; the sideslip cost has period pi."""
    wrapped = math.fmod(angle, math.pi)
    if wrapped > math.pi / 2.0:
        wrapped -= math.pi
    elif wrapped <= -math.pi / 2.0:
        wrapped += math.pi
    return wrapped


def table2_channels(variant: str) -> tuple[ChannelParams, ChannelParams]:
    """Reference speed/sideslip tuning (amplitudes 0.5 m/s and 10 degrees)."""
    k_speed = 0.11 if variant == ADAPTIVE else 0.05
    speed = ChannelParams(
        perturb_amp=0.5, perturb_freq=1.0, highpass_cutoff=1.0,
        lowpass_cutoff=1.0, gain=k_speed, adapter_cutoff=0.5)
    sideslip = ChannelParams(
        perturb_amp=math.radians(10.0), perturb_freq=0.5, highpass_cutoff=0.5,
        lowpass_cutoff=0.5, gain=0.04, adapter_cutoff=0.5)
    return speed, sideslip


def table2_params(variant: str = ADAPTIVE) -> EscParams:
    """Reference two-channel configuration for the copter plant."""
    return EscParams(channels=table2_channels(variant), variant=variant)


def with_epsilon(params: EscParams, epsilon: float) -> EscParams:
    """Copy of params with every channel's epsilon replaced."""
    return EscParams(
        channels=tuple(replace(c, epsilon=epsilon) for c in params.channels),
        variant=params.variant,
    )
