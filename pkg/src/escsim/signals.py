"""First-order low-pass / high-pass filters and the dither sinusoid.

These are the building blocks of the seeking loop: the high-pass strips the
slow trend of the cost signal, the low-pass smooths the demodulated gradient
estimate, and the sinusoid generates the probing perturbation.

The low-pass realizes ``xdot = cutoff * (u - x)``.  The update is the exact
zero-order-hold solution ``x+ = x + (1 - exp(-cutoff*dt)) * (u - x)`` rather
than forward Euler, so it is stable for any positive step.  ``step_euler``
keeps the forward-Euler variant around for cross-checking the two
discretizations against each other.

The high-pass shares the same single state: its output is ``u - x`` where x
is the low-pass of u at the same cutoff.
"""

from __future__ import annotations

import math

LOWPASS = "lowpass"
HIGHPASS = "highpass"


class FirstOrderFilter:
    """Single-state first-order filter.

    Parameters
    ----------
    cutoff : float
        Cutoff frequency in rad/s, must be > 0.
    kind : str
        ``"lowpass"`` or ``"highpass"``.
    state : float or None
        Initial internal state.  ``None`` warm-starts the state from the
        first input sample, which suppresses the startup transient (the
        low-pass then opens at its input, the high-pass at zero output).
    """

    def __init__(self, cutoff: float, kind: str = LOWPASS, state: float | None = None):
        if not math.isfinite(cutoff) or cutoff <= 0.0:
            raise ValueError(f"cutoff must be positive and finite, got {cutoff}")
        if kind not in (LOWPASS, HIGHPASS):
            raise ValueError(f"kind must be '{LOWPASS}' or '{HIGHPASS}', got {kind!r}")
        if state is not None and not math.isfinite(state):
            raise ValueError(f"state must be finite, got {state}")
        self.cutoff = float(cutoff)
        self.kind = kind
        self.state = None if state is None else float(state)

    def _validate_step(self, u: float, dt: float) -> None:
        if not math.isfinite(u):
            raise ValueError(f"filter input must be finite, got {u}")
        if not math.isfinite(dt) or dt <= 0.0:
            raise ValueError(f"dt must be positive and finite, got {dt}")
        # Keep the step inside the regime where the Euler cross-check is
        # also valid; the ZOH update itself would tolerate any dt.
        if dt * self.cutoff >= 1.0:
            raise ValueError(
                f"dt*cutoff = {dt * self.cutoff:.3g} >= 1; reduce the step or the cutoff"
            )

    def step(self, u: float, dt: float) -> float:
        """Advance the filter by dt seconds with input u; return the output."""
        self._validate_step(u, dt)
        if self.state is None:
            self.state = float(u)
        else:
            alpha = 1.0 - math.exp(-self.cutoff * dt)
            self.state += alpha * (u - self.state)
        if self.kind == HIGHPASS:
            return u - self.state
        return self.state

    def step_euler(self, u: float, dt: float) -> float:
        """Forward-Euler variant of :meth:`step`, for discretization checks."""
        self._validate_step(u, dt)
        if self.state is None:
            self.state = float(u)
        else:
            self.state += self.cutoff * dt * (u - self.state)
        if self.kind == HIGHPASS:
            return u - self.state
        return self.state

    def copy(self) -> "FirstOrderFilter":
        return FirstOrderFilter(self.cutoff, self.kind, self.state)

    def __repr__(self) -> str:
        return f"FirstOrderFilter(cutoff={self.cutoff}, kind={self.kind!r}, state={self.state})"


def sinusoid(amplitude: float, frequency: float, t: float) -> float:
    """Evaluate ``amplitude * sin(frequency * t)``; frequency in rad/s."""
    if frequency <= 0.0:
        raise ValueError(f"frequency must be positive, got {frequency}")
    return amplitude * math.sin(frequency * t)
