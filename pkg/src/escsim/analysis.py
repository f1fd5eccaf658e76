"""Stability pre-checks and run metrics.

The averaged closed-loop dynamics of the seeking controller linearize, at
their periodic equilibrium, into a block-lower-triangular Jacobian: the
interesting block A couples the setpoint errors with the gradient
estimates, while the trend-filter and second-moment states contribute a
negative diagonal.  Two independent checkers decide whether that Jacobian
is Hurwitz: a Routh-Hurwitz table on the characteristic polynomial
(computed by Faddeev-LeVerrier, no eigensolver involved) and a plain
eigenvalue test.

Run metrics quantify what a simulated run achieved: convergence time into a
band with a hold requirement, residual bias, perturbation cost overhead,
and envelope-clamp activity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .controller import EscParams, PrimedChannelParams
from .harness import Scenario, SimTrace, run_scenario

# Verdicts with max real part inside this margin are marginal, not stable.
BORDERLINE = 1e-9


def averaged_jacobian(channels, delta: float, hessian, epsilon: float) -> np.ndarray:
    """Jacobian of the averaged seeking dynamics at its equilibrium.

    ``channels`` are per-channel primed constants; ``delta`` is the slow
    time-scale factor; ``hessian`` is the cost curvature at the optimum.
    State ordering is [r_err (N), q (N), eta_err (N), m (N)], giving

        J = delta * [[A, 0], [B, -diag(hp_cutoffs, adapter_cutoffs)]]

    with A = [[0, -diag(k')/sqrt(eps)], [0.5*diag(wl'*a)*H, -diag(wl')]].
    The B block is the averaged cost gradient at the equilibrium, which
    vanishes to first order, so it is assembled as zero; the stability
    verdict rests on the diagonal blocks exactly as the averaging argument
    requires.
    """
    channels = tuple(channels)
    n = len(channels)
    h = np.atleast_2d(np.asarray(hessian, dtype=float))
    if h.shape != (n, n):
        raise ValueError(f"hessian shape {h.shape} does not match {n} channels")
    if not np.allclose(h, h.T, rtol=0.0, atol=1e-12):
        raise ValueError("hessian must be symmetric")
    if delta <= 0.0 or epsilon <= 0.0:
        raise ValueError("delta and epsilon must be positive")
    gains = np.array([c.gain for c in channels])
    lowpass = np.array([c.lowpass_cutoff for c in channels])
    highpass = np.array([c.highpass_cutoff for c in channels])
    adapter = np.array([c.adapter_cutoff for c in channels])
    amps = np.array([c.perturb_amp for c in channels])
    if np.any(gains <= 0) or np.any(lowpass <= 0) or np.any(highpass <= 0) \
            or np.any(adapter <= 0):
        raise ValueError("primed constants must be positive")

    a_block = np.zeros((2 * n, 2 * n))
    a_block[:n, n:] = -np.diag(gains) / math.sqrt(epsilon)
    a_block[n:, :n] = 0.5 * np.diag(lowpass * amps) @ h
    a_block[n:, n:] = -np.diag(lowpass)

    jac = np.zeros((4 * n, 4 * n))
    jac[:2 * n, :2 * n] = a_block
    jac[2 * n:, 2 * n:] = -np.diag(np.concatenate([highpass, adapter]))
    return delta * jac


def averaged_jacobian_from_params(params: EscParams, hessian,
                                  epsilon: float | None = None) -> np.ndarray:
    """Averaged Jacobian for concrete controller parameters.

    Any (omega, delta) factoring of the concrete constants yields the same
    Hurwitz verdict (the Jacobian only scales), so the identity factoring
    omega = delta = 1 is used: the primed constants are the concrete ones.
    """
    if epsilon is None:
        epsilon = params.channels[0].epsilon
    primed = [
        PrimedChannelParams(
            perturb_amp=c.perturb_amp, perturb_freq=c.perturb_freq,
            highpass_cutoff=c.highpass_cutoff, lowpass_cutoff=c.lowpass_cutoff,
            gain=c.gain, adapter_cutoff=c.adapter_cutoff, epsilon=c.epsilon)
        for c in params.channels
    ]
    return averaged_jacobian(primed, 1.0, hessian, epsilon)


def char_poly(matrix) -> np.ndarray:
    """Characteristic polynomial coefficients, highest degree first.

    Faddeev-LeVerrier recursion: trace-based, independent of any eigenvalue
    computation, so it can serve as one side of a dual stability check.
    """
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    n = a.shape[0]
    coeffs = np.zeros(n + 1)
    coeffs[0] = 1.0
    m = np.zeros_like(a)
    for k in range(1, n + 1):
        m = a @ m + coeffs[k - 1] * np.eye(n)
        coeffs[k] = -np.trace(a @ m) / k
    return coeffs


def routh_hurwitz(coeffs) -> bool:
    """True iff the polynomial (highest degree first) has all roots in the
    open left half plane, by the Routh table.

    A zero first-column pivot is handled by the epsilon-substitution
    convention to keep the table well defined; any non-positive first-column
    entry (after normalizing the leading coefficient positive) means the
    polynomial is not strictly Hurwitz, so marginal cases return False.
    """
    c = np.asarray(coeffs, dtype=float)
    if c.size == 0 or c[0] == 0.0:
        raise ValueError("leading coefficient must be nonzero")
    if c.size == 1:
        return True
    if c[0] < 0.0:
        c = -c
    n = c.size - 1  # polynomial degree
    width = (n // 2) + 1
    table = np.zeros((n + 1, width + 1))
    table[0, : len(c[0::2])] = c[0::2]
    table[1, : len(c[1::2])] = c[1::2]
    scale = float(np.max(np.abs(c)))
    tiny = 1e-30 * max(scale, 1.0)
    strict = True
    for i in range(2, n + 1):
        pivot = table[i - 1, 0]
        if pivot == 0.0:
            # Epsilon substitution: keep building with a tiny positive pivot.
            pivot = tiny
            strict = False
        for j in range(width):
            table[i, j] = (pivot * table[i - 2, j + 1]
                           - table[i - 2, 0] * table[i - 1, j + 1]) / pivot
    first_col = np.concatenate([[c[0]], table[1:, 0]])
    return strict and bool(np.all(first_col[: n + 1] > 0.0))


def is_hurwitz(matrix) -> tuple[bool, float]:
    """(all eigenvalues strictly left of the imaginary axis, max real part)."""
    a = np.atleast_2d(np.asarray(matrix, dtype=float))
    if a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    max_real = float(np.max(np.linalg.eigvals(a).real))
    return max_real < 0.0, max_real


@dataclass
class StabilityReport:
    """Averaged-Jacobian verdicts from the two independent checkers."""

    jacobian: np.ndarray
    hurwitz_rh: bool
    hurwitz_eig: bool
    max_real_eig: float
    warnings: list[str]

    @property
    def marginal(self) -> bool:
        return abs(self.max_real_eig) <= BORDERLINE

    def agree(self) -> bool:
        return self.marginal or (self.hurwitz_rh == self.hurwitz_eig)

    def to_dict(self) -> dict:
        return {
            "hurwitz_rh": self.hurwitz_rh,
            "hurwitz_eig": self.hurwitz_eig,
            "max_real_eig": self.max_real_eig,
            "marginal": self.marginal,
            "warnings": list(self.warnings),
            "jacobian": [[float(v) for v in row] for row in self.jacobian],
        }


def stability_report(params: EscParams, hessian, plant_bandwidth: float = 5.0,
                     epsilon: float | None = None) -> StabilityReport:
    """Assemble the averaged Jacobian and run both Hurwitz checkers."""
    from .controller import lint_params

    jac = averaged_jacobian_from_params(params, hessian, epsilon)
    hurwitz_eig, max_real = is_hurwitz(jac)
    hurwitz_rh = routh_hurwitz(char_poly(jac))
    warnings = lint_params(params, plant_bandwidth)
    if abs(max_real) <= BORDERLINE:
        warnings.append(
            f"marginal stability: max real eigenvalue {max_real:.3e} within "
            f"+-{BORDERLINE:g} of zero")
    return StabilityReport(jacobian=jac, hurwitz_rh=hurwitz_rh,
                           hurwitz_eig=hurwitz_eig, max_real_eig=max_real,
                           warnings=warnings)


# -- Run metrics --------------------------------------------------------------

def wrap_angle_error(err: np.ndarray) -> np.ndarray:
    """Fold angle errors into (-pi/2, pi/2]: sideslip repeats every half turn."""
    return (err + math.pi / 2.0) % math.pi - math.pi / 2.0


def channel_errors(trace: SimTrace, target, angle_channels=(1,)) -> np.ndarray:
    """(n, 2) per-channel setpoint errors, angle channels folded mod 180 deg."""
    target = np.asarray(target, dtype=float)
    err = trace.rhat() - target
    for ch in angle_channels:
        err[:, ch] = wrap_angle_error(err[:, ch])
    return err


def convergence_time(trace: SimTrace, target, band, hold: float = 30.0,
                     angle_channels=(1,)) -> float | None:
    """Earliest t with every channel inside its band for the next hold seconds.

    Returns None when no such window exists (including when the trace is too
    short to contain a full hold window).
    """
    band = np.asarray(band, dtype=float)
    if np.any(band <= 0.0):
        raise ValueError("bands must be positive")
    err = np.abs(channel_errors(trace, target, angle_channels))
    ok = np.all(err <= band, axis=1)
    t = trace.t
    dt = t[1] - t[0] if len(t) > 1 else 0.0
    if dt <= 0.0:
        return None
    hold_steps = max(1, round(hold / dt))
    if len(ok) < hold_steps:
        return None
    window = np.convolve(ok.astype(int), np.ones(hold_steps, dtype=int), "valid")
    idx = np.where(window == hold_steps)[0]
    if idx.size == 0:
        return None
    return float(t[idx[0]])


@dataclass
class RunMetrics:
    """Summary of one simulated run against a known target."""

    convergence_time: float | None
    steady_bias: np.ndarray | None  # per-channel RMS error over the tail
    cost_overhead_pct: float | None
    clamp_fraction: float

    def to_dict(self) -> dict:
        return {
            "convergence_time_s": self.convergence_time,
            "steady_bias": None if self.steady_bias is None
            else [float(v) for v in self.steady_bias],
            "cost_overhead_pct": self.cost_overhead_pct,
            "clamp_fraction": self.clamp_fraction,
        }


def steady_bias(trace: SimTrace, target, t_start: float,
                angle_channels=(1,)) -> np.ndarray:
    """Per-channel RMS deviation of the setpoint from the target after t_start.

    The averaged setpoint orbit is periodic around its equilibrium, so the
    RMS over the settled tail measures the whole residual orbit (offset plus
    ripple), which is the quantity the bias bound constrains.
    """
    err = channel_errors(trace, target, angle_channels)
    mask = trace.window(t_start)
    if not np.any(mask):
        raise ValueError("no samples after t_start")
    return np.sqrt(np.mean(err[mask] ** 2, axis=0))


def compute_metrics(trace: SimTrace, scenario: Scenario, target=None,
                    band=None, hold: float = 30.0) -> RunMetrics:
    """Convergence, bias, overhead, and clamp metrics for one run."""
    from .harness import clamp_fraction, default_band, resolve_target
    from .plants import QuadraticMap, cost

    from .plants import RANGE_SPEED_FLOOR

    if target is None:
        target = resolve_target(scenario)
    if band is None:
        band = default_band(scenario)
    wrap = () if isinstance(scenario.plant, QuadraticMap) else (1,)
    t_conv = convergence_time(trace, target, band, hold, angle_channels=wrap)
    bias = None
    overhead = None
    if t_conv is not None:
        tail_start = min(t_conv + hold, trace.t[-1] - hold)
        tail_start = max(tail_start, t_conv)
        bias = steady_bias(trace, target, tail_start, angle_channels=wrap)
        if isinstance(scenario.plant, QuadraticMap):
            optimal = scenario.plant.cost_at(np.asarray(scenario.plant.optimum))
        else:
            optimal = cost(float(target[0]), float(target[1]), scenario.goal,
                           scenario.plant)
        mask = trace.window(tail_start)
        if scenario.goal == "endurance" or isinstance(scenario.plant, QuadraticMap):
            mean_cost = float(np.mean(trace["p_e"][mask]))
        else:
            mean_cost = float(np.mean(
                trace["p_e"][mask] / np.maximum(trace["v"][mask], RANGE_SPEED_FLOOR)))
        if optimal != 0.0:
            overhead = 100.0 * (mean_cost - optimal) / optimal
    return RunMetrics(
        convergence_time=t_conv,
        steady_bias=bias,
        cost_overhead_pct=overhead,
        clamp_fraction=clamp_fraction(trace, scenario),
    )


def perturbation_overhead(scenario: Scenario, r_star=None, horizon: float = 200.0,
                          settle: float = 20.0) -> float:
    """Average cost increase from dithering at the optimum, in percent.

    Runs the plant open loop (integrators frozen) at r* plus the scenario's
    perturbations, averages the true cost after an initial settling window,
    and compares with the unperturbed steady cost at r*.
    """
    from .harness import resolve_target
    from .plants import RANGE_SPEED_FLOOR, QuadraticMap, cost

    if r_star is None:
        r_star = resolve_target(scenario)
    r_star = np.asarray(r_star, dtype=float)
    frozen = EscParams(
        channels=tuple(replace(c, gain=0.0) for c in scenario.esc.channels),
        variant=scenario.esc.variant)
    if isinstance(scenario.plant, QuadraticMap):
        initial = tuple(r_star)
        optimal = scenario.plant.cost_at(r_star)
    else:
        initial = (float(r_star[0]), math.degrees(float(r_star[1])))
        optimal = cost(float(r_star[0]), float(r_star[1]), scenario.goal,
                       scenario.plant)
    probe = replace(scenario, esc=frozen, initial=initial, duration=horizon,
                    noise_std=0.0, cost_scale=1.0)
    trace = run_scenario(probe)
    mask = trace.window(settle)
    if scenario.goal == "endurance" or isinstance(scenario.plant, QuadraticMap):
        mean_cost = float(np.mean(trace["y"][mask]))
    else:
        mean_cost = float(np.mean(
            trace["p_e"][mask] / np.maximum(trace["v"][mask], RANGE_SPEED_FLOOR)))
    if optimal == 0.0:
        raise ValueError("optimal cost is zero; overhead undefined")
    return 100.0 * (mean_cost - optimal) / optimal


def estimate_hessian(f, x0, h) -> np.ndarray:
    """Symmetric central-difference Hessian of a scalar function at x0."""
    x0 = np.asarray(x0, dtype=float)
    h = np.asarray(h, dtype=float)
    n = x0.size
    hess = np.zeros((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        hess[i, i] = (f(x0 + ei) - 2.0 * f(x0) + f(x0 - ei)) / h[i] ** 2
        for j in range(i + 1, n):
            ej = np.zeros(n)
            ej[j] = h[j]
            hess[i, j] = hess[j, i] = (
                f(x0 + ei + ej) - f(x0 + ei - ej) - f(x0 - ei + ej) + f(x0 - ei - ej)
            ) / (4.0 * h[i] * h[j])
    return hess
