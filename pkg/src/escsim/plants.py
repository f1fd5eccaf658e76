"""Simulated cost sources: analytic quadratic maps and a multicopter energy model.

The copter model is quasi-static momentum theory: level-flight trim balances
gravity against speed- and sideslip-dependent drag, the induced velocity
comes from the classic implicit rotor equation, and electric power is the
corrected induced-plus-parasite mechanical power over a drivetrain
efficiency, plus constant avionics power.  Closed-loop speed and sideslip
track their references through first-order lags, which is all the seeking
loop needs from the flight dynamics.

Angles are radians, speeds m/s, powers W.  The drag coefficient varies with
sideslip as c0 + c1*cos(2*(beta - beta_star)), so every cost is 180-degree
periodic in sideslip.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources

import numpy as np

GRAVITY = 9.81  # m/s^2

ENDURANCE = "endurance"
RANGE = "range"
COST_GOALS = (ENDURANCE, RANGE)

# Range cost divides power by speed; the floor keeps it finite near hover.
RANGE_SPEED_FLOOR = 0.5  # m/s


class SolverError(RuntimeError):
    """Raised when the induced-velocity iteration fails to converge."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class QuadraticMap:
    """Static analytic test map: cost(r) = offset + 0.5*(r-r*)' H (r-r*).

    The Hessian must be symmetric; by default it must also be positive
    definite (the cost has a proper minimum).  The stability test matrix
    deliberately simulates saddle surfaces, so indefinite Hessians are
    allowed behind ``allow_indefinite=True``.
    """

    optimum: tuple[float, ...]
    hessian: tuple[tuple[float, ...], ...]
    offset: float = 0.0
    allow_indefinite: bool = False

    def __post_init__(self):
        r_star = np.atleast_1d(np.asarray(self.optimum, dtype=float))
        h = np.atleast_2d(np.asarray(self.hessian, dtype=float))
        if h.shape != (r_star.size, r_star.size):
            raise ValueError(f"hessian shape {h.shape} does not match optimum size {r_star.size}")
        if not np.allclose(h, h.T, rtol=0.0, atol=1e-12):
            raise ValueError("hessian must be symmetric")
        if not self.allow_indefinite and np.any(np.linalg.eigvalsh(h) <= 0.0):
            raise ValueError("hessian must be positive definite for a proper minimum")
        object.__setattr__(self, "optimum", tuple(float(v) for v in r_star))
        object.__setattr__(self, "hessian", tuple(tuple(float(v) for v in row) for row in h))

    @property
    def n_channels(self) -> int:
        return len(self.optimum)

    def hessian_matrix(self) -> np.ndarray:
        return np.array(self.hessian, dtype=float)

    def cost_at(self, r) -> float:
        d = np.asarray(r, dtype=float) - np.asarray(self.optimum)
        return float(self.offset + 0.5 * d @ self.hessian_matrix() @ d)

    def gradient_at(self, r) -> np.ndarray:
        d = np.asarray(r, dtype=float) - np.asarray(self.optimum)
        return self.hessian_matrix() @ d


@dataclass(frozen=True)
class CopterParams:
    """Airframe, drag, and drivetrain constants of the energy model."""

    mass: float                 # kg
    rotor_radius: float         # m
    air_density: float = 1.225  # kg/m^3
    kappa: float = 1.15         # induced-power correction factor
    drag_base: float = 0.08     # c0, effective drag area, m^2-ish
    drag_asym: float = 0.03     # c1 < c0, sideslip-dependent part
    drag_phase: float = 0.0     # beta*, rad; drag peaks at beta = beta*
    avionics_power: float = 8.0     # W
    drivetrain_eff: float = 0.6     # (0, 1]
    speed_lag: float = 0.2      # s
    sideslip_lag: float = 0.2   # s
    v_min: float = 0.0          # m/s
    v_max: float = 15.0         # m/s

    def __post_init__(self):
        for name in ("mass", "rotor_radius", "air_density", "kappa", "drag_base",
                     "avionics_power", "speed_lag", "sideslip_lag"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.drag_asym < self.drag_base:
            raise ValueError("drag_asym must satisfy 0 <= c1 < c0 so drag stays positive")
        if not 0.0 < self.drivetrain_eff <= 1.0:
            raise ValueError("drivetrain_eff must be in (0, 1]")
        if not 0.0 <= self.v_min < self.v_max:
            raise ValueError("speed envelope must satisfy 0 <= v_min < v_max")

    def clamp_speed(self, v: float) -> float:
        return min(max(v, self.v_min), self.v_max)


def hover_induced_velocity(params: CopterParams) -> float:
    """Hover induced velocity v_h = sqrt(m*g / (8*rho*pi*r^2)).

    The denominator already carries the quadrotor's per-rotor weight share,
    so the total mass goes in directly.
    """
    return math.sqrt(params.mass * GRAVITY /
                     (8.0 * params.air_density * math.pi * params.rotor_radius ** 2))


def induced_velocity(v_inf: float, alpha: float, v_h: float, tol: float = 1e-8,
                     max_iter: int = 200) -> float:
    """Solve v_i = v_h^2 / sqrt((v_inf cos a)^2 + (v_inf sin a + v_i)^2).

    Damped fixed-point iteration (damping 0.5, started at v_h) with a Newton
    fallback if the iteration stalls.  Convergence is declared when the
    implicit-equation residual drops below tol * v_h^2.
    """
    if v_inf < 0.0:
        raise ValueError(f"v_inf must be >= 0, got {v_inf}")
    if tol <= 0.0 or v_h <= 0.0:
        raise ValueError("tol and v_h must be positive")
    horizontal = v_inf * math.cos(alpha)
    axial = v_inf * math.sin(alpha)
    vh2 = v_h * v_h

    def residual(vi: float) -> float:
        return vi * math.hypot(horizontal, axial + vi) - vh2

    vi = v_h
    for _ in range(max_iter):
        denom = math.hypot(horizontal, axial + vi)
        vi_new = 0.5 * vi + 0.5 * vh2 / denom
        vi = vi_new
        if abs(residual(vi)) < tol * vh2:
            return vi

    # Newton fallback on the monotone residual.
    for _ in range(50):
        denom = math.hypot(horizontal, axial + vi)
        res = vi * denom - vh2
        dres = denom + vi * (axial + vi) / denom
        step = res / dres
        vi -= step
        if vi <= 0.0:
            vi = 0.5 * vh2 / max(denom, v_h)
        if abs(residual(vi)) < tol * vh2:
            return vi
    raise SolverError(
        f"induced velocity did not converge (v_inf={v_inf:.3g}, alpha={alpha:.3g})",
        residual=abs(residual(vi)))


def drag_force(v_air: float, beta: float, params: CopterParams) -> float:
    """Aerodynamic drag 0.5*rho*v^2*(c0 + c1*cos(2*(beta - beta*))), in N."""
    if v_air < 0.0:
        raise ValueError(f"v_air must be >= 0, got {v_air}")
    coeff = params.drag_base + params.drag_asym * math.cos(2.0 * (beta - params.drag_phase))
    return 0.5 * params.air_density * v_air * v_air * coeff


def trim(v: float, beta: float, params: CopterParams) -> tuple[float, float]:
    """Level-flight trim: returns (alpha, total thrust).

    Thrust balances the weight/drag vector; alpha is the rotor-plane tilt
    into the wind, so v*sin(alpha) is the free-stream component along the
    rotor axis.
    """
    f_d = drag_force(v, beta, params)
    weight = params.mass * GRAVITY
    alpha = math.atan2(f_d, weight)
    thrust = math.hypot(weight, f_d)
    return alpha, thrust


def electric_power(v: float, beta: float, params: CopterParams,
                   tol: float = 1e-8) -> float:
    """Electric power draw in level flight at airspeed v and sideslip beta."""
    alpha, thrust = trim(v, beta, params)
    v_h = hover_induced_velocity(params)
    v_i = induced_velocity(v, alpha, v_h, tol=tol)
    mech = params.kappa * (v_i + v * math.sin(alpha)) * thrust
    return params.avionics_power + mech / params.drivetrain_eff


def cost(v: float, beta: float, goal: str, params: CopterParams) -> float:
    """Energy cost: power (endurance) or power per ground speed (range)."""
    if goal not in COST_GOALS:
        raise ValueError(f"goal must be one of {COST_GOALS}, got {goal!r}")
    p = electric_power(v, beta, params)
    if goal == ENDURANCE:
        return p
    return p / max(v, RANGE_SPEED_FLOOR)


@dataclass
class PlantState:
    """Closed-loop flight state: speed, sideslip, path angle, current wind."""

    v: float
    beta: float
    psi: float = 0.0
    wind: np.ndarray | None = None

    def __post_init__(self):
        if self.v < 0.0:
            raise ValueError(f"speed must be >= 0, got {self.v}")
        if self.wind is None:
            self.wind = np.zeros(2)
        else:
            self.wind = np.asarray(self.wind, dtype=float)


@dataclass(frozen=True)
class WindField:
    """Constant mean wind plus a sinusoidal gust along the mean direction.

    With zero mean the gust blows along +x.  ``sample(t)`` returns the
    horizontal wind vector at time t.
    """

    mean: tuple[float, float] = (0.0, 0.0)
    gust_amp: float = 0.0
    gust_freq: float = 1.0  # rad/s

    def __post_init__(self):
        if self.gust_amp < 0.0:
            raise ValueError("gust_amp must be >= 0")
        if self.gust_freq <= 0.0:
            raise ValueError("gust_freq must be positive")
        object.__setattr__(self, "mean", (float(self.mean[0]), float(self.mean[1])))

    @property
    def is_calm(self) -> bool:
        return self.mean == (0.0, 0.0) and self.gust_amp == 0.0

    def direction(self) -> np.ndarray:
        mean = np.asarray(self.mean)
        norm = np.linalg.norm(mean)
        if norm == 0.0:
            return np.array([1.0, 0.0])
        return mean / norm

    def sample(self, t: float) -> np.ndarray:
        return np.asarray(self.mean) + self.gust_amp * math.sin(self.gust_freq * t) * self.direction()


def plant_step(state: PlantState, r, dt: float, params: CopterParams,
               path_radius: float = 30.0) -> PlantState:
    """First-order lag of (v, beta) toward the envelope-clamped reference.

    The speed reference is clamped to the envelope; sideslip is unbounded
    (the cost is periodic in it).  The path angle advances with ground
    speed around a circle of ``path_radius``; it only matters under wind.
    """
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    r = np.asarray(r, dtype=float)
    v_ref = params.clamp_speed(float(r[0]))
    beta_ref = float(r[1])
    alpha_v = 1.0 - math.exp(-dt / params.speed_lag)
    alpha_b = 1.0 - math.exp(-dt / params.sideslip_lag)
    v = state.v + alpha_v * (v_ref - state.v)
    beta = state.beta + alpha_b * (beta_ref - state.beta)
    psi = state.psi + v * dt / path_radius
    return PlantState(v=v, beta=beta, psi=psi, wind=state.wind)


def relative_airflow(state: PlantState) -> tuple[float, float]:
    """Airspeed and effective sideslip given the state's wind vector.

    The body heading is the path tangent rotated by the commanded sideslip;
    the free stream is wind minus ground velocity.  The effective sideslip
    is the angle from the body axis to the free stream, which the drag model
    consumes modulo 180 degrees.  In calm air this reduces to (v, beta).
    """
    tangent = np.array([math.cos(state.psi), math.sin(state.psi)])
    ground_vel = state.v * tangent
    free_stream = state.wind - ground_vel
    v_air = float(np.linalg.norm(free_stream))
    if v_air < 1e-12:
        return 0.0, 0.0
    # Yaw-offset sign chosen so that in calm air the effective sideslip
    # equals the commanded one modulo 180 degrees.
    heading = state.psi - state.beta
    beta_eff = math.atan2(free_stream[1], free_stream[0]) - heading
    return v_air, beta_eff


def measured_cost(state: PlantState, goal: str, params: CopterParams) -> tuple[float, float]:
    """(cost, electric power) for the current flight state, wind included.

    Power is evaluated at the airspeed/effective-sideslip pair; the range
    cost divides by ground speed, which is what path progress pays for.
    """
    v_air, beta_eff = relative_airflow(state)
    p = electric_power(v_air, beta_eff, params)
    if goal == ENDURANCE:
        return p, p
    return p / max(state.v, RANGE_SPEED_FLOOR), p


def sensor(y_true: float, noise_std: float, rng: np.random.Generator) -> float:
    """Measured cost: truth plus Gaussian noise from the supplied generator."""
    if noise_std < 0.0:
        raise ValueError(f"noise_std must be >= 0, got {noise_std}")
    if noise_std == 0.0:
        return y_true
    return y_true + noise_std * rng.normal()


# -- Calibrated default airframes -------------------------------------------

PAYLOADS = ("none", "box")
BOX_MASS = 0.1  # kg, added by the box payload

_CALIBRATION_CACHE: dict | None = None


def load_calibration() -> dict:
    """Fitted airframe constants and cost-map optima (generated fixture)."""
    global _CALIBRATION_CACHE
    if _CALIBRATION_CACHE is None:
        path = resources.files("escsim").joinpath("data/calibration.json")
        with path.open("r", encoding="utf-8") as fh:
            _CALIBRATION_CACHE = json.load(fh)
    return _CALIBRATION_CACHE


def default_copter_params(payload: str = "none") -> CopterParams:
    """Calibrated airframe for the given payload ("none" or "box")."""
    if payload not in PAYLOADS:
        raise ValueError(f"payload must be one of {PAYLOADS}, got {payload!r}")
    fields = load_calibration()["params"][payload]
    return CopterParams(**fields)


def calibrated_optimum(payload: str, goal: str) -> tuple[float, float]:
    """(speed m/s, sideslip rad) of the calibrated cost-map argmin."""
    entry = load_calibration()["optima"][payload][goal]
    return float(entry["v"]), math.radians(float(entry["beta_deg"]))
