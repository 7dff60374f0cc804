"""Command-line experiments: plan, track, replan-demo, density-sweep.

Configuration lives in a versioned YAML file with strict key checking:
unknown keys are errors so a typo cannot silently change a benchmark.  Every
command echoes its configuration into the output directory, making each run
reproducible from the artifacts alone.

Exit codes: 0 success, 2 configuration/parse error, 3 solver failure,
4 closed-loop divergence.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import shutil
import sys
import time
from pathlib import Path

import numpy as np
import yaml

from . import metrics, simulator, trajectory
from .dynamics import QuadrotorParams, State
from .nlp import SolverOptions
from .planner import (
    PlannerConfig,
    PlannerError,
    Track,
    allocate_nodes,
    load_plan,
    plan,
    save_plan,
)
from .simulator import (
    DisturbanceConfig,
    FlightLog,
    MismatchConfig,
    SimConfig,
    WaypointSchedule,
    run_closed_loop,
    run_replanning,
)
from .tracker import MpcConfig, TmpcConfig

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVE = 3
EXIT_DIVERGED = 4


class ConfigError(ValueError):
    pass


def _require_keys(section: dict, allowed: set, path: str):
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {path}: {sorted(unknown)}")


def _solver_options(section: dict, path: str) -> SolverOptions:
    allowed = {f.name for f in dataclasses.fields(SolverOptions)}
    _require_keys(section, allowed, path)
    return SolverOptions(**section)


def load_config(path) -> dict:
    with open(path) as f:
        raw = yaml.safe_load(f)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping")
    _require_keys(raw, {"schema_version", "quadrotor", "planner", "tracker", "sim"}, str(path))
    if raw.get("schema_version") != 1:
        raise ConfigError(f"{path}: unsupported schema_version {raw.get('schema_version')!r}")

    q = raw.get("quadrotor", {})
    _require_keys(
        q,
        {"mass", "arm_length", "inertia", "drag", "thrust_min", "thrust_max", "torque_coeff", "gravity"},
        "quadrotor",
    )
    params = QuadrotorParams(
        mass=q.get("mass", 1.2),
        arm_length=q.get("arm_length", 0.3),
        inertia_diag=np.array(q.get("inertia", [1e-3, 2e-3, 3e-3])),
        drag_diag=np.array(q.get("drag", [0.398, 0.316, 0.230])),
        thrust_min=q.get("thrust_min", 0.0),
        thrust_max=q.get("thrust_max", 6.9),
        torque_coeff=q.get("torque_coeff", 0.2),
        gravity=q.get("gravity", 9.81),
    )

    p = raw.get("planner", {})
    _require_keys(
        p,
        {
            "node_density",
            "default_tolerance",
            "warmup_dt0",
            "dt_min",
            "dt_max",
            "pos_bound",
            "vel_bound",
            "omega_bound",
            "quaternion_penalty_weight",
            "control_reg_weight",
            "guess_speed",
            "warmup_solver",
            "main_solver",
        },
        "planner",
    )
    planner_kwargs = {
        k: p[k]
        for k in (
            "warmup_dt0",
            "dt_min",
            "dt_max",
            "pos_bound",
            "vel_bound",
            "omega_bound",
            "quaternion_penalty_weight",
            "control_reg_weight",
            "guess_speed",
        )
        if k in p
    }
    planner_cfg = PlannerConfig(**planner_kwargs)
    if "warmup_solver" in p:
        planner_cfg.warmup_options = _solver_options(p["warmup_solver"], "planner.warmup_solver")
    if "main_solver" in p:
        planner_cfg.main_options = _solver_options(p["main_solver"], "planner.main_solver")

    t = raw.get("tracker", {})
    _require_keys(
        t,
        {
            "kind",
            "horizon",
            "control_dt",
            "pos_weight",
            "vel_weight",
            "quat_weight",
            "omega_weight",
            "input_weight",
            "rate_factor",
            "t0_window",
        },
        "tracker",
    )
    kind = t.get("kind", "tmpc")
    if kind not in ("mpc", "tmpc"):
        raise ConfigError(f"tracker.kind must be mpc or tmpc, got {kind!r}")
    weights = np.concatenate(
        [
            np.full(3, t.get("pos_weight", 200.0)),
            np.full(3, t.get("vel_weight", 10.0)),
            np.full(4, t.get("quat_weight", 1.0)),
            np.full(3, t.get("omega_weight", 1.0)),
        ]
    )
    common = dict(
        horizon=t.get("horizon", 20),
        control_dt=t.get("control_dt", 0.02),
        state_weights=weights,
        input_weights=np.full(4, t.get("input_weight", 0.1)),
        rate_factor=t.get("rate_factor", 0.97),
    )
    tracker_cfg_mpc = MpcConfig(**common)
    tracker_cfg_tmpc = TmpcConfig(**common, t0_window=t.get("t0_window", 0.1))

    s = raw.get("sim", {})
    _require_keys(
        s,
        {
            "sim_dt",
            "control_period",
            "duration",
            "laps",
            "seed",
            "actuator_lag_tau",
            "mismatch",
            "disturbance",
        },
        "sim",
    )
    mm = s.get("mismatch", {})
    _require_keys(mm, {"mass_delta", "drag_scale", "inertia_scale"}, "sim.mismatch")
    dd = s.get("disturbance", {})
    _require_keys(dd, {"constant_force", "noise_std_pos", "noise_std_vel"}, "sim.disturbance")
    sim_cfg = SimConfig(
        sim_dt=s.get("sim_dt", 0.001),
        control_period=s.get("control_period", 0.02),
        duration=s.get("duration"),
        lap_count=s.get("laps"),
        mismatch=MismatchConfig(**mm),
        disturbance=DisturbanceConfig(
            constant_force=np.array(dd.get("constant_force", [0.0, 0.0, 0.0])),
            noise_std_pos=dd.get("noise_std_pos", 0.0),
            noise_std_vel=dd.get("noise_std_vel", 0.0),
        ),
        seed=s.get("seed", 0),
        actuator_lag_tau=s.get("actuator_lag_tau", 0.0),
    )

    return {
        "params": params,
        "planner": planner_cfg,
        "tracker_kind": kind,
        "tracker_mpc": tracker_cfg_mpc,
        "tracker_tmpc": tracker_cfg_tmpc,
        "sim": sim_cfg,
        "default_tolerance": p.get("default_tolerance", 0.05),
        "node_density": p.get("node_density", 0.3),
    }


def load_track(path, default_tolerance: float, node_density: float) -> Track:
    with open(path) as f:
        raw = yaml.safe_load(f)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a mapping")
    _require_keys(raw, {"schema_version", "start_position", "periodic", "waypoints", "node_density"}, str(path))
    if raw.get("schema_version") != 1:
        raise ConfigError(f"{path}: unsupported schema_version")
    wps, tols = [], []
    for i, w in enumerate(raw.get("waypoints", [])):
        _require_keys(w, {"position", "tolerance"}, f"waypoints[{i}]")
        wps.append(w["position"])
        tols.append(w.get("tolerance", default_tolerance))
    if not wps:
        raise ConfigError(f"{path}: no waypoints")
    return Track(
        waypoints=np.array(wps, dtype=float),
        tolerances=np.array(tols, dtype=float),
        start_state=State.hover(raw.get("start_position", [0.0, 0.0, -1.0])),
        periodic=bool(raw.get("periodic", False)),
        node_density=float(raw.get("node_density", node_density)),
    )


def _echo_inputs(out: Path, *paths):
    out.mkdir(parents=True, exist_ok=True)
    for p in paths:
        if p is not None:
            shutil.copy(p, out / Path(p).name)


def _parse_mismatch(items) -> MismatchConfig:
    cfg = MismatchConfig()
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--mismatch expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        try:
            val = float(value)
        except ValueError:
            raise ConfigError(f"--mismatch {key}: not a number: {value!r}") from None
        if key == "mass":
            cfg.mass_delta = val
        elif key == "drag":
            cfg.drag_scale = val
        elif key == "inertia":
            cfg.inertia_scale = val
        else:
            raise ConfigError(f"--mismatch: unknown key {key!r} (use mass, drag, inertia)")
    return cfg


def cmd_plan(args) -> int:
    cfg = load_config(args.config)
    track = load_track(args.track, cfg["default_tolerance"], cfg["node_density"])
    out = Path(args.out)
    _echo_inputs(out, args.config, args.track)
    try:
        result = plan(track, cfg["params"], cfg["planner"])
    except PlannerError as exc:
        print(f"planning failed: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    save_plan(result, out / "plan.json")
    w = result.solve_report["warmup"]["wall_time"]
    m = result.solve_report["main"]["wall_time"]
    print(f"planned {track.n_waypoints} waypoints, {result.allocation.total_nodes} nodes")
    print(f"T* = {result.total_time:.4f} s")
    print("waypoint errors [m]:", " ".join(f"{e:.4f}" for e in result.waypoint_errors))
    print(f"solve time: {w:.2f} + {m:.2f} s (warm-up + time-optimal)")
    print(f"plan written to {out / 'plan.json'}")
    return EXIT_OK


def _report_row(path: Path, row: dict):
    header = ["run_id", "controller", "mismatch", "rmse", "max_error", "track_time"]
    exists = path.exists()
    with open(path, "a", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=header)
        if not exists:
            writer.writeheader()
        writer.writerow(row)


def cmd_track(args) -> int:
    cfg = load_config(args.config)
    plan_result = load_plan(args.plan)
    out = Path(args.out)
    _echo_inputs(out, args.config, args.plan)
    kind = args.controller or cfg["tracker_kind"]
    tracker_cfg = cfg["tracker_tmpc"] if kind == "tmpc" else cfg["tracker_mpc"]
    sim_cfg = cfg["sim"]
    sim_cfg.mismatch = _parse_mismatch(args.mismatch)
    if args.seed is not None:
        sim_cfg.seed = args.seed
    if sim_cfg.resolve_duration(plan_result.total_time) <= 0:
        print("zero-duration run", file=sys.stderr)
        return EXIT_CONFIG

    traj = trajectory.from_plan(plan_result)
    log = run_closed_loop(traj, kind, plan_result, cfg["params"], sim_cfg, tracker_cfg)
    log.to_csv(out / "flight.csv")
    if log.diverged:
        print("run diverged; partial log retained", file=sys.stderr)
        return EXIT_DIVERGED
    report = metrics.evaluate(log, traj, plan_result.track)
    run_id = f"{kind}-{sim_cfg.mismatch.label()}-seed{sim_cfg.seed}"
    _report_row(
        out / "report.csv",
        {
            "run_id": run_id,
            "controller": kind,
            "mismatch": sim_cfg.mismatch.label(),
            "rmse": f"{report.rmse:.6f}",
            "max_error": f"{report.max_error:.6f}",
            "track_time": "" if report.tracking_time is None else f"{report.tracking_time:.4f}",
        },
    )
    print(report.summary())
    print(f"flight log written to {out / 'flight.csv'}")
    return EXIT_OK


def cmd_replan_demo(args) -> int:
    cfg = load_config(args.config)
    track = load_track(args.track, cfg["default_tolerance"], cfg["node_density"])
    out = Path(args.out)
    _echo_inputs(out, args.config, args.track, args.schedule)
    try:
        schedule = WaypointSchedule.load(args.schedule)
        schedule.validate(track)
    except ValueError as exc:
        print(f"schedule error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        plan_result = plan(track, cfg["params"], cfg["planner"])
    except PlannerError as exc:
        print(f"planning failed: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    save_plan(plan_result, out / "plan.json")
    sim_cfg = cfg["sim"]
    if args.seed is not None:
        sim_cfg.seed = args.seed
    log = run_replanning(
        track, schedule, cfg["params"], cfg["planner"], cfg["tracker_tmpc"], sim_cfg, plan_result
    )
    log.to_csv(out / "flight.csv")
    for ev in log.replan_events:
        if ev.get("success"):
            print(
                f"replan at t={ev['applied_at']:.2f}s: waypoint {ev['waypoint_index']} moved, "
                f"solve {ev['wall_s']:.3f}s wall ({ev['modeled_s']:.3f}s modeled), "
                f"swap at t={ev['swap_at']:.2f}s"
            )
        else:
            print(f"replan at t={ev['applied_at']:.2f}s FAILED: {ev.get('error')}")
    if log.diverged:
        print("run diverged; partial log retained", file=sys.stderr)
        return EXIT_DIVERGED
    print(f"flight log written to {out / 'flight.csv'}")
    return EXIT_OK


def cmd_density_sweep(args) -> int:
    cfg = load_config(args.config)
    densities = [float(d) for d in args.densities.split(",")]
    if len(densities) < 2:
        print("need at least two densities", file=sys.stderr)
        return EXIT_CONFIG
    track = load_track(args.track, cfg["default_tolerance"], cfg["node_density"])
    out = Path(args.out)
    _echo_inputs(out, args.config, args.track)
    rng = np.random.default_rng(args.seed if args.seed is not None else 0)
    rows = []
    for density in densities:
        spacing = 1.0 / density
        t_sw = dataclasses.replace(track, node_density=spacing)
        t_opts, walls = [], []
        for rep in range(args.repeats):
            t0 = time.perf_counter()
            try:
                result = plan(t_sw, cfg["params"], cfg["planner"], init_jitter=args.jitter, rng=rng)
                walls.append(time.perf_counter() - t0)
                t_opts.append(result.total_time)
            except PlannerError:
                continue
        row = {
            "density": density,
            "node_spacing": spacing,
            "n_ok": len(t_opts),
            "t_opt_mean": np.mean(t_opts) if t_opts else np.nan,
            "t_opt_std": np.std(t_opts) if t_opts else np.nan,
            "t_opt_min": np.min(t_opts) if t_opts else np.nan,
            "solve_s_mean": np.mean(walls) if walls else np.nan,
            "solve_s_std": np.std(walls) if walls else np.nan,
        }
        rows.append(row)
        flag = "" if t_opts else "  [all repetitions failed]"
        print(
            f"density {density:g}/m: T* = {row['t_opt_mean']:.4f} +- {row['t_opt_std']:.4f} s, "
            f"solve {row['solve_s_mean']:.1f} +- {row['solve_s_std']:.1f} s ({row['n_ok']}/{args.repeats}){flag}"
        )
    header = list(rows[0].keys())
    with open(out / "sweep.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=header)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
    print(f"sweep written to {out / 'sweep.csv'}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quadfly", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_plan = sub.add_parser("plan", help="plan a time-optimal trajectory over a track")
    p_plan.add_argument("--config", required=True)
    p_plan.add_argument("--track", required=True)
    p_plan.add_argument("--out", required=True)
    p_plan.set_defaults(func=cmd_plan)

    p_track = sub.add_parser("track", help="closed-loop tracking of a plan")
    p_track.add_argument("--config", required=True)
    p_track.add_argument("--plan", required=True)
    p_track.add_argument("--controller", choices=["mpc", "tmpc"])
    p_track.add_argument("--mismatch", action="append", metavar="KEY=VALUE")
    p_track.add_argument("--seed", type=int)
    p_track.add_argument("--out", required=True)
    p_track.set_defaults(func=cmd_track)

    p_replan = sub.add_parser("replan-demo", help="dynamic-waypoint replanning run")
    p_replan.add_argument("--config", required=True)
    p_replan.add_argument("--track", required=True)
    p_replan.add_argument("--schedule", required=True)
    p_replan.add_argument("--seed", type=int)
    p_replan.add_argument("--out", required=True)
    p_replan.set_defaults(func=cmd_replan_demo)

    p_sweep = sub.add_parser("density-sweep", help="node-density convergence study")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--track", required=True)
    p_sweep.add_argument("--densities", required=True, help="comma-separated nodes per meter")
    p_sweep.add_argument("--repeats", type=int, default=5)
    p_sweep.add_argument("--jitter", type=float, default=0.1)
    p_sweep.add_argument("--seed", type=int)
    p_sweep.add_argument("--out", required=True)
    p_sweep.set_defaults(func=cmd_density_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
