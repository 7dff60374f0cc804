"""Deterministic closed-loop simulation with model mismatch and replanning.

The plant integrates the true model (nominal parameters perturbed by the
mismatch config) at the inner step, while the controller only ever sees the
nominal parameters.  Inputs are held over each control period.

Timing is fully deterministic: the logged per-step solve time is a modeled
quantity (objective evaluations times a fixed per-evaluation cost), and the
replanning harness charges that modeled time, rounded up to whole control
periods, before swapping in a new trajectory.  Measured wall times are kept
alongside for reporting but never feed back into the simulation.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import dynamics as dyn
from . import tracker as trk
from . import trajectory as trj
from .dynamics import INPUT_DIM, QUAT, STATE_DIM, QuadrotorParams, State
from .planner import PlannerConfig, PlanResult, PlannerError, Track, replan
from .tracker import ControllerState, MpcConfig, TmpcConfig, make_controller

# deterministic solve-time model: milliseconds charged per objective evaluation
EFFORT_MS_PER_EVAL = 0.05

CSV_COLUMNS = [
    "t",
    "px",
    "py",
    "pz",
    "vx",
    "vy",
    "vz",
    "qw",
    "qx",
    "qy",
    "qz",
    "wx",
    "wy",
    "wz",
    "T1",
    "T2",
    "T3",
    "T4",
    "ref_px",
    "ref_py",
    "ref_pz",
    "t0",
    "solve_ms",
    "replan_flag",
]


@dataclass
class MismatchConfig:
    mass_delta: float = 0.0
    drag_scale: float = 1.0
    inertia_scale: float = 1.0

    def __post_init__(self):
        if self.drag_scale <= 0:
            raise ValueError("drag_scale must be positive")

    def label(self) -> str:
        parts = []
        if self.mass_delta:
            parts.append(f"m{self.mass_delta:+g}kg")
        if self.drag_scale != 1.0:
            parts.append(f"{self.drag_scale:g}D")
        if self.inertia_scale != 1.0:
            parts.append(f"{self.inertia_scale:g}J")
        return "+".join(parts) if parts else "baseline"


@dataclass
class DisturbanceConfig:
    constant_force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    noise_std_pos: float = 0.0
    noise_std_vel: float = 0.0

    def __post_init__(self):
        self.constant_force = np.asarray(self.constant_force, dtype=float)

    @property
    def any_noise(self) -> bool:
        return self.noise_std_pos > 0 or self.noise_std_vel > 0


@dataclass
class SimConfig:
    sim_dt: float = 0.001
    control_period: float = 0.02
    duration: Optional[float] = None
    lap_count: Optional[int] = None
    mismatch: MismatchConfig = field(default_factory=MismatchConfig)
    disturbance: DisturbanceConfig = field(default_factory=DisturbanceConfig)
    seed: int = 0
    actuator_lag_tau: float = 0.0

    def __post_init__(self):
        if self.sim_dt > self.control_period:
            raise ValueError("sim_dt must not exceed control_period")
        ratio = self.control_period / self.sim_dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("control_period must be an integer multiple of sim_dt")

    @property
    def substeps(self) -> int:
        return int(round(self.control_period / self.sim_dt))

    def resolve_duration(self, lap_time: float) -> float:
        if self.duration is not None:
            if self.duration <= 0:
                raise ValueError("duration must be positive")
            return self.duration
        laps = self.lap_count if self.lap_count is not None else 1
        if laps <= 0:
            raise ValueError("lap_count must be positive")
        return laps * lap_time


@dataclass
class WaypointSchedule:
    """Timed waypoint moves: (event_time, waypoint_index, new_position)."""

    events: list

    def __post_init__(self):
        times = [e[0] for e in self.events]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("event times must be non-decreasing")

    def validate(self, track: Track):
        for t, idx, _ in self.events:
            if not 0 <= idx < track.n_waypoints:
                raise ValueError(f"waypoint index {idx} out of range")

    @classmethod
    def parse(cls, text: str) -> "WaypointSchedule":
        """One event per line: "time index x y z"; '#' starts a comment."""
        events = []
        for ln, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            fields = line.split()
            if len(fields) != 5:
                raise ValueError(f"schedule line {ln}: expected 'time index x y z', got {raw!r}")
            try:
                t = float(fields[0])
                idx = int(fields[1])
                pos = np.array([float(v) for v in fields[2:5]])
            except ValueError as exc:
                raise ValueError(f"schedule line {ln}: {exc}") from None
            events.append((t, idx, pos))
        return cls(events)

    @classmethod
    def load(cls, path) -> "WaypointSchedule":
        with open(path) as f:
            return cls.parse(f.read())


@dataclass
class FlightLog:
    """Per-control-step records on a uniform time grid."""

    t: np.ndarray
    states: np.ndarray  # (n, 13)
    inputs: np.ndarray  # (n, 4)
    ref_positions: np.ndarray  # (n, 3)
    t0: np.ndarray
    solve_ms: np.ndarray
    replan_flag: np.ndarray
    diverged: bool = False
    replan_events: list = field(default_factory=list)

    @property
    def n_records(self) -> int:
        return len(self.t)

    def positions(self) -> np.ndarray:
        return self.states[:, :3]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            f.write(",".join(CSV_COLUMNS) + "\n")
            for i in range(self.n_records):
                row = (
                    [self.t[i]]
                    + list(self.states[i])
                    + list(self.inputs[i])
                    + list(self.ref_positions[i])
                    + [self.t0[i], self.solve_ms[i], self.replan_flag[i]]
                )
                f.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path) -> "FlightLog":
        data = np.genfromtxt(path, delimiter=",", names=True)
        data = np.atleast_1d(data)
        cols = {name: np.asarray(data[name], dtype=float) for name in data.dtype.names}
        missing = [c for c in CSV_COLUMNS if c not in cols]
        if missing:
            raise ValueError(f"flight log missing columns: {missing}")
        states = np.column_stack([cols[c] for c in CSV_COLUMNS[1:14]])
        inputs = np.column_stack([cols[c] for c in CSV_COLUMNS[14:18]])
        refs = np.column_stack([cols[c] for c in CSV_COLUMNS[18:21]])
        return cls(
            t=cols["t"],
            states=states,
            inputs=inputs,
            ref_positions=refs,
            t0=cols["t0"],
            solve_ms=cols["solve_ms"],
            replan_flag=cols["replan_flag"],
        )


def apply_mismatch(params: QuadrotorParams, mismatch: MismatchConfig) -> QuadrotorParams:
    """Perturbed copy of the parameters; the plant flies these, not the controller."""
    new_mass = params.mass + mismatch.mass_delta
    if new_mass <= 0:
        raise ValueError("mismatch drives mass non-positive")
    return QuadrotorParams(
        mass=new_mass,
        arm_length=params.arm_length,
        inertia_diag=params.inertia_diag * mismatch.inertia_scale,
        drag_diag=params.drag_diag * mismatch.drag_scale,
        thrust_min=params.thrust_min,
        thrust_max=params.thrust_max,
        torque_coeff=params.torque_coeff,
        gravity=params.gravity,
    )


class _Plant:
    """True-model integrator with optional actuator lag and constant force."""

    def __init__(self, x0: np.ndarray, true_params: QuadrotorParams, sim_cfg: SimConfig):
        self.x = x0.copy()
        self.params = true_params
        self.cfg = sim_cfg
        self.thrusts = np.full(INPUT_DIM, true_params.hover_thrust)
        self.accel_extra = sim_cfg.disturbance.constant_force / true_params.mass

    def step_control_period(self, u_cmd: np.ndarray) -> np.ndarray:
        dt = self.cfg.sim_dt
        tau = self.cfg.actuator_lag_tau
        plain = tau == 0.0 and not np.any(self.accel_extra)
        for _ in range(self.cfg.substeps):
            if tau > 0.0:
                self.thrusts = u_cmd + (self.thrusts - u_cmd) * np.exp(-dt / tau)
            else:
                self.thrusts = u_cmd
            if plain:
                self.x = dyn.rk4_step_arrays(self.x, self.thrusts, dt, self.params)
            else:
                self.x = self._rk4_disturbed(self.x, self.thrusts, dt)
        return self.x

    def _rk4_disturbed(self, x, u, dt):
        def f(xx):
            d = dyn.derivative_arrays(xx, u, self.params)
            d[3:6] += self.accel_extra
            return d

        k1 = f(x)
        k2 = f(x + 0.5 * dt * k1)
        k3 = f(x + 0.5 * dt * k2)
        k4 = f(x + dt * k3)
        out = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[QUAT] /= np.linalg.norm(out[QUAT])
        return out


def _measure(x: np.ndarray, dist: DisturbanceConfig, rng) -> np.ndarray:
    if not dist.any_noise:
        return x
    noisy = x.copy()
    noisy[:3] += rng.normal(0.0, dist.noise_std_pos, size=3)
    noisy[3:6] += rng.normal(0.0, dist.noise_std_vel, size=3)
    return noisy


def _diverged(x: np.ndarray) -> bool:
    return not np.all(np.isfinite(x)) or np.linalg.norm(x[:3]) > 1e3


class _LogBuilder:
    def __init__(self):
        self.rows = {k: [] for k in ("t", "x", "u", "ref", "t0", "ms", "flag")}

    def add(self, t, x, u, ref, t0, ms, flag):
        self.rows["t"].append(t)
        self.rows["x"].append(x.copy())
        self.rows["u"].append(u.copy())
        self.rows["ref"].append(np.asarray(ref, dtype=float).copy())
        self.rows["t0"].append(t0)
        self.rows["ms"].append(ms)
        self.rows["flag"].append(flag)

    def build(self, diverged=False, replan_events=None) -> FlightLog:
        return FlightLog(
            t=np.array(self.rows["t"]),
            states=np.array(self.rows["x"]),
            inputs=np.array(self.rows["u"]),
            ref_positions=np.array(self.rows["ref"]),
            t0=np.array(self.rows["t0"]),
            solve_ms=np.array(self.rows["ms"]),
            replan_flag=np.array(self.rows["flag"]),
            diverged=diverged,
            replan_events=replan_events or [],
        )


def run_closed_loop(
    traj: trj.TimeParamTrajectory,
    controller_kind: str,
    plan_result: PlanResult,
    params: QuadrotorParams,
    sim_cfg: SimConfig,
    tracker_cfg: Optional[MpcConfig] = None,
) -> FlightLog:
    """Track the trajectory in closed loop; returns the flight log.

    controller_kind is "mpc" (fixed-time references at a slowed clock) or
    "tmpc" (time-adaptive).  The plant flies the mismatched model; the
    controller predicts with the nominal one.
    """
    if controller_kind not in ("mpc", "tmpc"):
        raise ValueError("controller_kind must be 'mpc' or 'tmpc'")
    if tracker_cfg is None:
        tracker_cfg = TmpcConfig() if controller_kind == "tmpc" else MpcConfig()
    if abs(tracker_cfg.control_dt - sim_cfg.control_period) > 1e-12:
        raise ValueError("tracker control_dt must equal the simulator control period")

    duration = sim_cfg.resolve_duration(plan_result.total_time)
    n_steps = int(np.floor(duration / sim_cfg.control_period))
    rng = np.random.default_rng(sim_cfg.seed)

    true_params = apply_mismatch(params, sim_cfg.mismatch)
    x0 = plan_result.node_states[0]
    plant = _Plant(x0, true_params, sim_cfg)
    ctl = make_controller(State.from_array(x0), params, tracker_cfg)

    log = _LogBuilder()
    x = plant.x
    diverged = False
    for step in range(n_steps + 1):
        t_now = step * sim_cfg.control_period
        if _diverged(x):
            diverged = True
            break
        x_meas = _measure(x, sim_cfg.disturbance, rng)
        if controller_kind == "tmpc":
            u, t0_star, ctl = trk.tmpc_step(State.from_array(x_meas, renormalize=True), traj, tracker_cfg, ctl)
            ref_pos, _ = trj.sample(traj, t0_star)
            t_ref = t0_star
        else:
            refs = trk.build_mpc_references(plan_result, traj, ctl.ref_clock, tracker_cfg)
            u, ctl = trk.nmpc_step(State.from_array(x_meas, renormalize=True), refs, tracker_cfg, ctl)
            ref_pos = refs[0][0].p
            t_ref = ctl.ref_clock
            ctl.ref_clock += tracker_cfg.rate_factor * tracker_cfg.control_dt
        ms = ctl.last_n_evals * EFFORT_MS_PER_EVAL
        log.add(t_now, x, u.thrusts, ref_pos, t_ref, ms, 0.0)
        if step < n_steps:
            x = plant.step_control_period(u.thrusts)
    return log.build(diverged=diverged)


def _reproject_t0(traj_new: trj.TimeParamTrajectory, position: np.ndarray, t0_old: float, window: float = 1.0):
    """Nearest-in-time point of the new trajectory near the old progress."""
    ts = np.arange(max(0.0, t0_old - window), t0_old + window, 1e-3)
    if len(ts) == 0:
        return t0_old
    pos, _ = trj.sample_many(traj_new, ts)
    d = np.linalg.norm(pos - position, axis=1)
    return float(ts[int(np.argmin(d))])


def run_replanning(
    track: Track,
    schedule: WaypointSchedule,
    params: QuadrotorParams,
    planner_cfg: PlannerConfig,
    tracker_cfg: MpcConfig,
    sim_cfg: SimConfig,
    plan_result: PlanResult,
) -> FlightLog:
    """Closed-loop run with scheduled waypoint moves and warm-started replans.

    Each event triggers a replan whose modeled solve time is charged in whole
    control periods; the new trajectory is swapped in atomically between
    control steps once that time has elapsed, and the tracker's time progress
    is re-projected onto the new trajectory.
    """
    schedule.validate(track)
    if not isinstance(tracker_cfg, TmpcConfig):
        raise ValueError("run_replanning drives the time-adaptive tracker")

    duration = sim_cfg.resolve_duration(plan_result.total_time)
    n_steps = int(np.floor(duration / sim_cfg.control_period))
    rng = np.random.default_rng(sim_cfg.seed)

    true_params = apply_mismatch(params, sim_cfg.mismatch)
    x0 = plan_result.node_states[0]
    plant = _Plant(x0, true_params, sim_cfg)
    ctl = make_controller(State.from_array(x0), params, tracker_cfg)

    current_track = track
    current_plan = plan_result
    traj = trj.from_plan(plan_result)
    pending = list(schedule.events)
    swap_ready: Optional[dict] = None

    log = _LogBuilder()
    events_out = []
    x = plant.x
    diverged = False
    for step in range(n_steps + 1):
        t_now = step * sim_cfg.control_period
        if _diverged(x):
            diverged = True
            break

        replan_flag = 0.0
        if swap_ready is not None and t_now >= swap_ready["ready_at"] - 1e-12:
            current_track = swap_ready["track"]
            current_plan = swap_ready["plan"]
            traj = trj.from_plan(current_plan)
            ctl.t0 = _reproject_t0(traj, x[:3], ctl.t0)
            replan_flag = 1.0
            events_out.append(swap_ready["event"])
            swap_ready = None

        if swap_ready is None and pending and t_now >= pending[0][0] - 1e-12:
            ev_time, idx, new_pos = pending.pop(0)
            new_wps = current_track.waypoints.copy()
            new_wps[idx] = new_pos
            new_track = Track(
                waypoints=new_wps,
                tolerances=current_track.tolerances.copy(),
                start_state=current_track.start_state,
                periodic=current_track.periodic,
                node_density=current_track.node_density,
            )
            t_wall = time.perf_counter()
            try:
                new_plan = replan(new_track, current_plan, params, planner_cfg)
                wall_s = time.perf_counter() - t_wall
                modeled_s = new_plan.solve_report["main"]["n_evals"] * EFFORT_MS_PER_EVAL / 1e3
                delay = max(1, int(np.ceil(modeled_s / sim_cfg.control_period)))
                swap_ready = {
                    "ready_at": t_now + delay * sim_cfg.control_period,
                    "track": new_track,
                    "plan": new_plan,
                    "event": {
                        "event_time": ev_time,
                        "applied_at": t_now,
                        "swap_at": t_now + delay * sim_cfg.control_period,
                        "waypoint_index": idx,
                        "wall_s": wall_s,
                        "modeled_s": modeled_s,
                        "success": True,
                    },
                }
            except PlannerError as exc:
                events_out.append(
                    {
                        "event_time": ev_time,
                        "applied_at": t_now,
                        "waypoint_index": idx,
                        "wall_s": time.perf_counter() - t_wall,
                        "success": False,
                        "error": str(exc),
                    }
                )

        x_meas = _measure(x, sim_cfg.disturbance, rng)
        u, t0_star, ctl = trk.tmpc_step(State.from_array(x_meas, renormalize=True), traj, tracker_cfg, ctl)
        ref_pos, _ = trj.sample(traj, t0_star)
        ms = ctl.last_n_evals * EFFORT_MS_PER_EVAL
        log.add(t_now, x, u.thrusts, ref_pos, t0_star, ms, replan_flag)
        if step < n_steps:
            x = plant.step_control_period(u.thrusts)
    return log.build(diverged=diverged, replan_events=events_out)
