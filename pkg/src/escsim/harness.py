"""Scenario configuration, fixed-step closed-loop simulation, and trace I/O.

A scenario bundles a plant (multicopter energy model or analytic quadratic
map), a cost goal, controller parameters, initial setpoints, and the run
grid (dt, duration, seed, noise, wind).  ``run_scenario`` steps plant and
controller synchronously on one clock and records every internal signal
into a SimTrace whose CSV column order is part of the public contract.

Everything is deterministic given (scenario, seed): the only randomness is
the seeded sensor-noise generator.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .controller import (
    ADAPTIVE,
    STANDARD,
    ChannelParams,
    EscController,
    EscParams,
    table2_params,
)
from .plants import (
    COST_GOALS,
    CopterParams,
    ENDURANCE,
    PlantState,
    QuadraticMap,
    WindField,
    calibrated_optimum,
    default_copter_params,
    measured_cost,
    plant_step,
    sensor,
)

# Fixed CSV column order; the sideslip-channel angles are radians.
TRACE_COLUMNS = (
    "t", "rhat_v", "rhat_beta", "r_v", "r_beta", "v", "beta", "y",
    "q_v", "q_beta", "m_v", "m_beta", "g_v", "g_beta",
    "eta_v", "eta_beta", "p_e", "wind_x", "wind_y",
)

MAX_DT = 0.02       # s; keeps >= 50 samples per period at 1 rad/s
MIN_PERIODS = 10.0  # minimum scenario length in slowest perturbation periods


class ConfigError(ValueError):
    """Scenario configuration problem; the message names the offending field."""


@dataclass
class Scenario:
    """One closed-loop run: plant, goal, controller, and run grid.

    ``initial`` is (speed m/s, sideslip deg) for the copter plant and plain
    channel units for the quadratic map.  ``payload`` tags which calibrated
    airframe the plant came from, when it came from one.
    """

    plant: CopterParams | QuadraticMap
    esc: EscParams
    goal: str = ENDURANCE
    initial: tuple[float, ...] = (0.0, 0.0)
    dt: float = 0.02
    duration: float = 400.0
    seed: int = 0
    noise_std: float = 2.0
    cost_scale: float = 1.0
    path_radius: float = 30.0
    wind: WindField = field(default_factory=WindField)
    payload: str | None = None

    def __post_init__(self):
        if self.goal not in COST_GOALS:
            raise ConfigError(f"goal: must be one of {COST_GOALS}, got {self.goal!r}")
        if not 0.0 < self.dt <= MAX_DT:
            raise ConfigError(f"dt: must be in (0, {MAX_DT}] s, got {self.dt}")
        min_duration = MIN_PERIODS * self.esc.slowest_period()
        if self.duration < min_duration:
            raise ConfigError(
                f"duration: {self.duration} s is below {MIN_PERIODS:g} slowest "
                f"perturbation periods ({min_duration:.1f} s)")
        if self.noise_std < 0.0:
            raise ConfigError(f"noise_std: must be >= 0, got {self.noise_std}")
        if self.cost_scale <= 0.0:
            raise ConfigError(f"cost_scale: must be positive, got {self.cost_scale}")
        if self.path_radius <= 0.0:
            raise ConfigError(f"path_radius: must be positive, got {self.path_radius}")
        if self.esc.n_channels != 2:
            raise ConfigError(
                "esc.channels: scenarios record the two-channel trace layout, "
                f"got {self.esc.n_channels} channels")
        if len(self.initial) != self.esc.n_channels:
            raise ConfigError(
                f"initial: expected {self.esc.n_channels} entries, got {len(self.initial)}")
        if isinstance(self.plant, QuadraticMap) and self.plant.n_channels != 2:
            raise ConfigError("plant.optimum: quadratic scenario maps need 2 channels")

    def initial_setpoints(self) -> list[float]:
        """Initial r_hat per channel in internal units (radians for sideslip)."""
        if isinstance(self.plant, QuadraticMap):
            return [float(v) for v in self.initial]
        return [float(self.initial[0]), math.radians(float(self.initial[1]))]


class SimTrace:
    """Uniformly sampled record of every controller and plant signal."""

    def __init__(self, data: dict[str, np.ndarray]):
        missing = [c for c in TRACE_COLUMNS if c not in data]
        if missing:
            raise ValueError(f"trace is missing columns: {missing}")
        n = len(data["t"])
        for name in TRACE_COLUMNS:
            if len(data[name]) != n:
                raise ValueError(f"column {name} has length {len(data[name])}, expected {n}")
        self._data = {name: np.asarray(data[name], dtype=float) for name in TRACE_COLUMNS}

    def __len__(self) -> int:
        return len(self._data["t"])

    def __getitem__(self, name: str) -> np.ndarray:
        return self._data[name]

    @property
    def t(self) -> np.ndarray:
        return self._data["t"]

    def rhat(self) -> np.ndarray:
        """(n, 2) array of the unperturbed setpoints."""
        return np.column_stack([self._data["rhat_v"], self._data["rhat_beta"]])

    def window(self, t_start: float, t_stop: float | None = None) -> np.ndarray:
        """Boolean mask selecting t_start <= t (< t_stop)."""
        mask = self.t >= t_start
        if t_stop is not None:
            mask &= self.t < t_stop
        return mask

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            self.write_csv(fh)

    def write_csv(self, fh) -> None:
        fh.write(",".join(TRACE_COLUMNS) + "\n")
        cols = [self._data[name] for name in TRACE_COLUMNS]
        for row in zip(*cols):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "SimTrace":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
            if tuple(header) != TRACE_COLUMNS:
                raise ValueError(f"unexpected trace header: {header}")
            raw = np.loadtxt(fh, delimiter=",", ndmin=2)
        if raw.shape[1] != len(TRACE_COLUMNS):
            raise ValueError(f"expected {len(TRACE_COLUMNS)} columns, got {raw.shape[1]}")
        return cls({name: raw[:, i] for i, name in enumerate(TRACE_COLUMNS)})


def run_scenario(scenario: Scenario) -> SimTrace:
    """Simulate the closed loop and record every signal, including t=0.

    Per step: the plant tracks the previous references over [t, t+dt], the
    cost of the new flight state is measured (noise, then cost scaling), and
    the controller consumes that sample to produce the next references.
    """
    esc = EscController(scenario.esc, scenario.initial_setpoints())
    rng = np.random.default_rng(scenario.seed)
    n = round(scenario.duration / scenario.dt)
    quadratic = isinstance(scenario.plant, QuadraticMap)

    cols = {name: np.zeros(n + 1) for name in TRACE_COLUMNS}

    r = esc.outputs()
    if quadratic:
        x = np.asarray(r, dtype=float).copy()
        y_true = scenario.plant.cost_at(x)
        p_e = y_true
        wind_now = np.zeros(2)
    else:
        state = PlantState(
            v=scenario.plant.clamp_speed(r[0]), beta=r[1],
            wind=scenario.wind.sample(0.0))
        y_true, p_e = measured_cost(state, scenario.goal, scenario.plant)
        x = np.array([state.v, state.beta])
        wind_now = state.wind

    def record(k: int, t: float, y_meas: float) -> None:
        cols["t"][k] = t
        cols["rhat_v"][k], cols["rhat_beta"][k] = (
            esc.state.channels[0].r_hat, esc.state.channels[1].r_hat)
        cols["r_v"][k], cols["r_beta"][k] = r[0], r[1]
        cols["v"][k], cols["beta"][k] = x[0], x[1]
        cols["y"][k] = y_meas
        cols["q_v"][k], cols["q_beta"][k] = (
            esc.state.channels[0].q, esc.state.channels[1].q)
        cols["m_v"][k], cols["m_beta"][k] = (
            esc.state.channels[0].m, esc.state.channels[1].m)
        cols["g_v"][k], cols["g_beta"][k] = (
            esc.state.channels[0].g, esc.state.channels[1].g)
        cols["eta_v"][k] = esc.state.channels[0].hp.state or 0.0
        cols["eta_beta"][k] = esc.state.channels[1].hp.state or 0.0
        cols["p_e"][k] = p_e
        cols["wind_x"][k], cols["wind_y"][k] = wind_now[0], wind_now[1]

    record(0, 0.0, scenario.cost_scale * y_true)

    for k in range(1, n + 1):
        t = k * scenario.dt
        if quadratic:
            x = np.asarray(r, dtype=float).copy()
            y_true = scenario.plant.cost_at(x)
            p_e = y_true
        else:
            state.wind = scenario.wind.sample(t)
            state = plant_step(state, r, scenario.dt, scenario.plant,
                               path_radius=scenario.path_radius)
            y_true, p_e = measured_cost(state, scenario.goal, scenario.plant)
            x = np.array([state.v, state.beta])
            wind_now = state.wind
        y_meas = scenario.cost_scale * sensor(y_true, scenario.noise_std, rng)
        r = esc.step(y_meas, scenario.dt)
        record(k, t, y_meas)

    return SimTrace(cols)


def resolve_target(scenario: Scenario) -> np.ndarray:
    """Per-channel optimum the controller is expected to find."""
    if isinstance(scenario.plant, QuadraticMap):
        return np.asarray(scenario.plant.optimum, dtype=float)
    if scenario.payload is not None:
        v, beta = calibrated_optimum(scenario.payload, scenario.goal)
        return np.array([v, beta])
    from .calibration import grid_argmin  # local import; rarely needed

    v, beta_deg, _ = grid_argmin(scenario.plant, scenario.goal)
    return np.array([v, math.radians(beta_deg)])


def clamp_fraction(trace: SimTrace, scenario: Scenario) -> float:
    """Fraction of samples where the speed reference hit the envelope."""
    if isinstance(scenario.plant, QuadraticMap):
        return 0.0
    r_v = trace["r_v"]
    clamped = (r_v < scenario.plant.v_min) | (r_v > scenario.plant.v_max)
    return float(np.mean(clamped))


# -- Variant comparison ------------------------------------------------------

@dataclass
class VariantResult:
    variant: str
    trace: SimTrace
    convergence_time: float | None


@dataclass
class ComparisonReport:
    standard: VariantResult
    adaptive: VariantResult
    target: np.ndarray

    @property
    def speedup(self) -> float | None:
        ts = self.standard.convergence_time
        ta = self.adaptive.convergence_time
        if ts is None or ta is None or ta <= 0.0:
            return None
        return ts / ta


def compare_variants(scenario: Scenario,
                     standard_esc: EscParams | None = None,
                     adaptive_esc: EscParams | None = None,
                     band=None, hold: float = 30.0) -> ComparisonReport:
    """Run the scenario under both controller variants with identical seeds.

    Controller parameters default to the reference tuning of each variant.
    Convergence is judged against the plant's known optimum with the default
    bands (0.5 m/s, 10 degrees) unless overridden.
    """
    from .analysis import convergence_time  # cycle-free at call time

    if standard_esc is None:
        standard_esc = table2_params(STANDARD)
    if adaptive_esc is None:
        adaptive_esc = table2_params(ADAPTIVE)
    target = resolve_target(scenario)
    if band is None:
        band = default_band(scenario)
    wrap = () if isinstance(scenario.plant, QuadraticMap) else (1,)
    results = {}
    for variant, esc_params in ((STANDARD, standard_esc), (ADAPTIVE, adaptive_esc)):
        trace = run_scenario(replace(scenario, esc=esc_params))
        t_conv = convergence_time(trace, target, band, hold, angle_channels=wrap)
        results[variant] = VariantResult(variant, trace, t_conv)
    return ComparisonReport(standard=results[STANDARD], adaptive=results[ADAPTIVE],
                            target=target)


def default_band(scenario: Scenario) -> np.ndarray:
    """Convergence bands: (0.5 m/s, 10 deg) for the copter, else 5% dither."""
    if isinstance(scenario.plant, QuadraticMap):
        return np.array([max(0.5, 1.0 * c.perturb_amp) for c in scenario.esc.channels])
    return np.array([0.5, math.radians(10.0)])


# -- Cost maps ---------------------------------------------------------------

@dataclass
class CostMap:
    v_grid: np.ndarray
    beta_grid_deg: np.ndarray
    values: np.ndarray  # shape (len(v_grid), len(beta_grid_deg))
    goal: str

    def argmin(self) -> tuple[float, float, float]:
        i, j = np.unravel_index(int(np.argmin(self.values)), self.values.shape)
        return float(self.v_grid[i]), float(self.beta_grid_deg[j]), float(self.values[i, j])

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("v,beta_deg,cost\n")
            for i, v in enumerate(self.v_grid):
                for j, b in enumerate(self.beta_grid_deg):
                    fh.write(f"{v:.17g},{b:.17g},{self.values[i, j]:.17g}\n")


def cost_map(plant: CopterParams, goal: str, v_grid=None, beta_grid_deg=None) -> CostMap:
    """Evaluate the steady-state cost on a (speed, sideslip) grid."""
    from .plants import cost

    if v_grid is None:
        v_grid = np.arange(0.5, plant.v_max + 0.25, 0.5)
    if beta_grid_deg is None:
        beta_grid_deg = np.arange(0.0, 180.0, 10.0)
    v_grid = np.asarray(v_grid, dtype=float)
    beta_grid_deg = np.asarray(beta_grid_deg, dtype=float)
    if v_grid.size == 0 or beta_grid_deg.size == 0:
        raise ValueError("cost map grids must be non-empty")
    if v_grid.min() < plant.v_min or v_grid.max() > plant.v_max:
        raise ValueError("speed grid exceeds the plant envelope")
    values = np.empty((v_grid.size, beta_grid_deg.size))
    for i, v in enumerate(v_grid):
        for j, b in enumerate(beta_grid_deg):
            values[i, j] = cost(float(v), math.radians(float(b)), goal, plant)
    return CostMap(v_grid=v_grid, beta_grid_deg=beta_grid_deg, values=values, goal=goal)


# -- Config files ------------------------------------------------------------

_COPTER_FIELDS = (
    "mass", "rotor_radius", "air_density", "kappa", "drag_base", "drag_asym",
    "drag_phase", "avionics_power", "drivetrain_eff", "speed_lag",
    "sideslip_lag", "v_min", "v_max",
)
_CHANNEL_FIELDS = (
    "perturb_amp", "perturb_freq", "highpass_cutoff", "lowpass_cutoff",
    "gain", "adapter_cutoff", "epsilon",
)


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ConfigError(f"{context}{key}: missing required field")
    return mapping[key]


def _parse_plant(node: dict) -> tuple[CopterParams | QuadraticMap, str | None]:
    kind = _require(node, "kind", "plant.")
    if kind == "quadratic":
        optimum = _require(node, "optimum", "plant.")
        hessian = _require(node, "hessian", "plant.")
        plant = QuadraticMap(optimum=tuple(optimum), hessian=tuple(map(tuple, hessian)),
                             offset=float(node.get("offset", 0.0)),
                             allow_indefinite=bool(node.get("allow_indefinite", False)))
        return plant, None
    if kind != "copter":
        raise ConfigError(f"plant.kind: expected 'copter' or 'quadratic', got {kind!r}")
    payload = node.get("payload")
    overrides = {k: float(node[k]) for k in _COPTER_FIELDS if k in node}
    if payload is not None:
        base = default_copter_params(payload)
        plant = replace(base, **overrides) if overrides else base
    else:
        try:
            plant = CopterParams(**overrides)
        except TypeError as exc:
            raise ConfigError(f"plant: {exc}") from exc
    return plant, payload


def _parse_esc(node: dict | None) -> EscParams:
    if node is None:
        return table2_params(ADAPTIVE)
    variant = node.get("variant", ADAPTIVE)
    if variant not in (STANDARD, ADAPTIVE):
        raise ConfigError(f"esc.variant: unknown variant {variant!r}")
    if "channels" not in node:
        # A bare variant selector is the documented reference-tuning shortcut;
        # anything more detailed must spell the channels out.
        if set(node) <= {"variant"}:
            return table2_params(variant)
        raise ConfigError("esc.channels: missing required field")
    channels = []
    for i, ch in enumerate(node["channels"]):
        unknown = set(ch) - set(_CHANNEL_FIELDS)
        if unknown:
            raise ConfigError(f"esc.channels[{i}]: unknown fields {sorted(unknown)}")
        try:
            channels.append(ChannelParams(**{k: float(v) for k, v in ch.items()}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"esc.channels[{i}]: {exc}") from exc
    try:
        return EscParams(channels=tuple(channels), variant=variant)
    except ValueError as exc:
        raise ConfigError(f"esc: {exc}") from exc


def scenario_from_dict(cfg: dict) -> Scenario:
    """Build a Scenario from a parsed config mapping; names bad fields."""
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a mapping")
    plant, payload = _parse_plant(_require(cfg, "plant", ""))
    esc = _parse_esc(cfg.get("esc"))
    wind_node = cfg.get("wind") or {}
    wind = WindField(
        mean=tuple(wind_node.get("mean", (0.0, 0.0))),
        gust_amp=float(wind_node.get("gust_amp", 0.0)),
        gust_freq=float(wind_node.get("gust_freq", 1.0)))
    try:
        return Scenario(
            plant=plant,
            esc=esc,
            goal=cfg.get("goal", ENDURANCE),
            initial=tuple(float(v) for v in _require(cfg, "initial", "")),
            dt=float(cfg.get("dt", 0.02)),
            duration=float(cfg.get("duration", 400.0)),
            seed=int(cfg.get("seed", 0)),
            noise_std=float(cfg.get("noise_std", 2.0)),
            cost_scale=float(cfg.get("cost_scale", 1.0)),
            path_radius=float(cfg.get("path_radius", 30.0)),
            wind=wind,
            payload=payload,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def scenario_to_dict(s: Scenario) -> dict:
    """Inverse of scenario_from_dict, suitable for YAML dumping."""
    if isinstance(s.plant, QuadraticMap):
        plant: dict = {
            "kind": "quadratic",
            "optimum": list(s.plant.optimum),
            "hessian": [list(row) for row in s.plant.hessian],
            "offset": s.plant.offset,
        }
        if s.plant.allow_indefinite:
            plant["allow_indefinite"] = True
    else:
        plant = {"kind": "copter"}
        if s.payload is not None:
            plant["payload"] = s.payload
            base = default_copter_params(s.payload)
        else:
            base = None
        for name in _COPTER_FIELDS:
            value = getattr(s.plant, name)
            if base is None or getattr(base, name) != value:
                plant[name] = value
    return {
        "plant": plant,
        "goal": s.goal,
        "esc": {
            "variant": s.esc.variant,
            "channels": [
                {name: getattr(c, name) for name in _CHANNEL_FIELDS}
                for c in s.esc.channels
            ],
        },
        "initial": list(s.initial),
        "dt": s.dt,
        "duration": s.duration,
        "seed": s.seed,
        "noise_std": s.noise_std,
        "cost_scale": s.cost_scale,
        "path_radius": s.path_radius,
        "wind": {"mean": list(s.wind.mean), "gust_amp": s.wind.gust_amp,
                 "gust_freq": s.wind.gust_freq},
    }


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    return scenario_from_dict(cfg)


def save_scenario(scenario: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(scenario_to_dict(scenario), fh, sort_keys=False)


def apply_overrides(cfg: dict, overrides: dict[str, str]) -> dict:
    """Apply dotted-path overrides (strings parsed as YAML scalars)."""
    for dotted, raw in overrides.items():
        node = cfg
        parts = dotted.split(".")
        for part in parts[:-1]:
            key: object = int(part) if part.lstrip("-").isdigit() else part
            try:
                node = node[key]
            except (KeyError, IndexError, TypeError):
                raise ConfigError(f"{dotted}: no such config path")
        leaf = parts[-1]
        key = int(leaf) if leaf.lstrip("-").isdigit() else leaf
        value = yaml.safe_load(raw)
        try:
            node[key] = value
        except (IndexError, TypeError):
            raise ConfigError(f"{dotted}: no such config path")
    return cfg
