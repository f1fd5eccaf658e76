"""Command-line front end: run, compare, costmap, stability, sweep, calibrate.

Every command reads a YAML scenario config (see the README for the schema),
applies --set dotted-path overrides, and writes CSV/JSON artifacts into the
output directory.  Angles in JSON reports are degrees; trace CSV columns
stay in internal units (radians).  Given the same config and seed, repeated
invocations produce identical artifacts apart from the generated_at stamp
in the JSON files.

Exit codes: 0 success, 1 configuration/usage error, 2 runtime/solver error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from concurrent import futures
from pathlib import Path

import numpy as np
import yaml

from . import calibration
from .analysis import compute_metrics, estimate_hessian, stability_report
from .controller import ADAPTIVE, STANDARD, table2_params
from .harness import (
    ConfigError,
    Scenario,
    apply_overrides,
    compare_variants,
    cost_map,
    default_band,
    resolve_target,
    run_scenario,
    scenario_from_dict,
)
from .plants import QuadraticMap, SolverError, cost

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _load_config(args) -> dict:
    if args.config is None:
        raise ConfigError("--config is required for this command")
    with open(args.config, "r", encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    overrides = {}
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "variant", None):
        cfg.setdefault("esc", {})["variant"] = args.variant
    return cfg


def _scenario(args) -> Scenario:
    return scenario_from_dict(_load_config(args))


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload: dict) -> None:
    payload = dict(payload)
    payload["generated_at"] = time.strftime("%Y-%m-%dT%H:%M:%S")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def _metrics_payload(metrics, scenario: Scenario, target) -> dict:
    data = metrics.to_dict()
    if not isinstance(scenario.plant, QuadraticMap):
        data["target"] = {"v_mps": float(target[0]),
                          "beta_deg": math.degrees(float(target[1]))}
        if data["steady_bias"] is not None:
            data["steady_bias"] = {
                "v_mps": data["steady_bias"][0],
                "beta_deg": math.degrees(data["steady_bias"][1]),
            }
    else:
        data["target"] = [float(v) for v in target]
    return data


def cmd_run(args) -> int:
    scenario = _scenario(args)
    out = _out_dir(args)
    trace = run_scenario(scenario)
    trace.to_csv(out / "trace.csv")
    target = resolve_target(scenario)
    metrics = compute_metrics(trace, scenario, target=target)
    _write_json(out / "metrics.json", _metrics_payload(metrics, scenario, target))
    print(f"wrote {out / 'trace.csv'} and {out / 'metrics.json'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    scenario = _scenario(args)
    out = _out_dir(args)
    report = compare_variants(scenario)
    report.standard.trace.to_csv(out / "trace_standard.csv")
    report.adaptive.trace.to_csv(out / "trace_adaptive.csv")
    payload = {
        "target": _target_json(scenario, report.target),
        "standard": {"convergence_time_s": report.standard.convergence_time},
        "adaptive": {"convergence_time_s": report.adaptive.convergence_time},
        "speedup": report.speedup,
    }
    _write_json(out / "comparison.json", payload)
    print(f"standard: {report.standard.convergence_time} s, "
          f"adaptive: {report.adaptive.convergence_time} s, "
          f"speedup: {report.speedup}")
    return EXIT_OK


def _target_json(scenario: Scenario, target) -> dict | list:
    if isinstance(scenario.plant, QuadraticMap):
        return [float(v) for v in target]
    return {"v_mps": float(target[0]), "beta_deg": math.degrees(float(target[1]))}


def cmd_costmap(args) -> int:
    scenario = _scenario(args)
    if isinstance(scenario.plant, QuadraticMap):
        raise ConfigError("plant.kind: costmap needs the copter plant")
    out = _out_dir(args)
    grid = cost_map(scenario.plant, scenario.goal)
    grid.to_csv(out / "costmap.csv")
    v, beta_deg, value = grid.argmin()
    _write_json(out / "argmin.json", {
        "goal": scenario.goal,
        "payload": scenario.payload,
        "v_mps": v, "beta_deg": beta_deg, "cost": value,
    })
    print(f"cost map argmin: v={v:g} m/s beta={beta_deg:g} deg cost={value:.9g}")
    return EXIT_OK


def cmd_stability(args) -> int:
    scenario = _scenario(args)
    out = _out_dir(args)
    if isinstance(scenario.plant, QuadraticMap):
        hessian = scenario.plant.hessian_matrix()
    else:
        target = resolve_target(scenario)
        hessian = estimate_hessian(
            lambda r: cost(max(float(r[0]), scenario.plant.v_min), float(r[1]),
                           scenario.goal, scenario.plant),
            target, (0.25, math.radians(2.5)))
    bandwidth = 1.0 / max(getattr(scenario.plant, "speed_lag", 0.2),
                          getattr(scenario.plant, "sideslip_lag", 0.2))
    report = stability_report(scenario.esc, hessian, plant_bandwidth=bandwidth)
    _write_json(out / "stability.json", report.to_dict())
    verdict = "hurwitz" if report.hurwitz_eig else ("marginal" if report.marginal else "unstable")
    print(f"stability: {verdict} (max real eig {report.max_real_eig:.6g}); "
          f"{len(report.warnings)} warning(s)")
    for w in report.warnings:
        print(f"  warning: {w}")
    return EXIT_OK


def _run_sweep_case(item) -> dict:
    name, cfg = item
    scenario = scenario_from_dict(cfg)
    trace = run_scenario(scenario)
    target = resolve_target(scenario)
    metrics = compute_metrics(trace, scenario, target=target)
    row = {"name": name}
    row.update(_metrics_payload(metrics, scenario, target))
    return row


def cmd_sweep(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        sweep_cfg = yaml.safe_load(fh)
    if not isinstance(sweep_cfg, dict) or "base" not in sweep_cfg:
        raise ConfigError("base: sweep config must contain a base scenario")
    runs = sweep_cfg.get("runs")
    if not isinstance(runs, list) or not runs:
        raise ConfigError("runs: sweep config must list at least one run")
    cases = []
    for i, run_spec in enumerate(runs):
        name = str(run_spec.get("name", f"run{i}"))
        cfg = yaml.safe_load(yaml.safe_dump(sweep_cfg["base"]))
        overrides = {str(k): yaml.safe_dump(v).strip()
                     for k, v in (run_spec.get("set") or {}).items()}
        cfg = apply_overrides(cfg, overrides)
        scenario_from_dict(cfg)  # validate before spawning workers
        cases.append((name, cfg))
    out = _out_dir(args)
    if args.workers > 1:
        with futures.ProcessPoolExecutor(max_workers=args.workers) as pool:
            rows = list(pool.map(_run_sweep_case, cases))
    else:
        rows = [_run_sweep_case(c) for c in cases]
    _write_json(out / "sweep.json", {"runs": rows})
    print(f"wrote {out / 'sweep.json'} ({len(rows)} runs)")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    out = _out_dir(args)
    fixture = calibration.write_fixture(out / "calibration.json")
    for payload in ("none", "box"):
        optima = fixture["optima"][payload]
        print(f"{payload}: endurance ({optima['endurance']['v']:g} m/s, "
              f"{optima['endurance']['beta_deg']:g} deg), "
              f"range ({optima['range']['v']:g} m/s, {optima['range']['beta_deg']:g} deg)")
    print(f"wrote {out / 'calibration.json'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="escsim",
        description="Extremum seeking for energy-optimal flight speed and sideslip")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", required=needs_config, help="scenario YAML path")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="dotted-path config override, repeatable")
        p.add_argument("--seed", type=int, default=None, help="override scenario seed")

    p_run = sub.add_parser("run", help="simulate one scenario; write trace + metrics")
    common(p_run)
    p_run.add_argument("--variant", choices=[STANDARD, ADAPTIVE], default=None)
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run both controller variants, same seed")
    common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    p_map = sub.add_parser("costmap", help="steady-state cost grid and argmin")
    common(p_map)
    p_map.set_defaults(func=cmd_costmap)

    p_stab = sub.add_parser("stability", help="averaged Jacobian Hurwitz checks + linter")
    common(p_stab)
    p_stab.add_argument("--variant", choices=[STANDARD, ADAPTIVE], default=None)
    p_stab.set_defaults(func=cmd_stability)

    p_sweep = sub.add_parser("sweep", help="run a list of override sets against a base scenario")
    common(p_sweep)
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.set_defaults(func=cmd_sweep)

    p_cal = sub.add_parser("calibrate", help="re-fit the airframe constants fixture")
    p_cal.add_argument("--out", default="out", help="output directory")
    p_cal.set_defaults(func=cmd_calibrate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver error: {exc} (residual {exc.residual:.3g})", file=sys.stderr)
        return EXIT_RUNTIME
    except RuntimeError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
