"""Time-parameterized trajectory built from a plan's nodes.

Each inter-node interval carries the unique cubic matching the two endpoint
positions and velocities, so the curve is C0 everywhere and C1 at the knots.
Sampling past the end clamps and holds for aperiodic trajectories and wraps
modulo the duration for periodic ones.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .planner import PlanResult


@dataclass
class TimeParamTrajectory:
    knot_times: np.ndarray  # (N+1,), t_0 = 0
    positions: np.ndarray  # (N+1, 3)
    velocities: np.ndarray  # (N+1, 3)
    coeffs: np.ndarray  # (N, 4, 3): a0 + a1 s + a2 s^2 + a3 s^3 per axis
    periodic: bool = False

    @property
    def duration(self) -> float:
        return float(self.knot_times[-1])


def from_plan(plan: PlanResult) -> TimeParamTrajectory:
    """Cubic interpolation of the plan's node positions and velocities."""
    t = plan.knot_times()
    if np.any(np.diff(t) <= 0):
        raise ValueError("knot times must be strictly increasing")
    p = plan.node_states[:, :3]
    v = plan.node_states[:, 3:6]
    h = np.diff(t)[:, None]
    p0, p1 = p[:-1], p[1:]
    v0, v1 = v[:-1], v[1:]
    a0 = p0
    a1 = v0
    a2 = 3.0 * (p1 - p0) / h**2 - (2.0 * v0 + v1) / h
    a3 = -2.0 * (p1 - p0) / h**3 + (v0 + v1) / h**2
    coeffs = np.stack([a0, a1, a2, a3], axis=1)
    return TimeParamTrajectory(
        knot_times=t,
        positions=p.copy(),
        velocities=v.copy(),
        coeffs=coeffs,
        periodic=plan.track.periodic,
    )


def sample_many(traj: TimeParamTrajectory, ts) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized position/velocity evaluation at an array of times."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    t_end = traj.duration
    if traj.periodic:
        tt = np.mod(ts, t_end)
        held = np.zeros(ts.shape, dtype=bool)
    else:
        tt = np.clip(ts, 0.0, t_end)
        held = (ts > t_end) | (ts < 0.0)
    seg = np.clip(np.searchsorted(traj.knot_times, tt, side="right") - 1, 0, len(traj.coeffs) - 1)
    s = (tt - traj.knot_times[seg])[:, None]
    a0, a1, a2, a3 = (traj.coeffs[seg, i, :] for i in range(4))
    pos = a0 + s * (a1 + s * (a2 + s * a3))
    vel = a1 + s * (2.0 * a2 + 3.0 * s * a3)
    vel[held] = 0.0
    return pos, vel


def sample(traj: TimeParamTrajectory, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Position and velocity at time t (clamp-hold or modular out of range)."""
    pos, vel = sample_many(traj, [t])
    return pos[0], vel[0]


def sample_reference(traj: TimeParamTrajectory, t0: float, dt: float, horizon: int) -> np.ndarray:
    """Reference positions traj(t0 + (k-1) dt) for k = 1..horizon, shape (H, 3)."""
    if dt <= 0 or horizon < 1:
        raise ValueError("need dt > 0 and horizon >= 1")
    ts = t0 + dt * np.arange(horizon)
    pos, _ = sample_many(traj, ts)
    return pos


def export_csv(traj: TimeParamTrajectory, path, rate_hz: float = 100.0) -> None:
    """Dense (t, position, velocity) dump for plotting."""
    ts = np.arange(0.0, traj.duration + 0.5 / rate_hz, 1.0 / rate_hz)
    pos, vel = sample_many(traj, ts)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["t", "px", "py", "pz", "vx", "vy", "vz"])
        for i, t in enumerate(ts):
            writer.writerow([repr(float(t))] + [repr(float(x)) for x in pos[i]] + [repr(float(x)) for x in vel[i]])
