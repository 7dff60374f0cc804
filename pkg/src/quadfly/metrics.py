"""Tracking-quality metrics over flight logs.

The position error of each logged sample is its minimum distance to the
time-parameterized trajectory.  The inner minimization over time uses a dense
1 ms grid followed by golden-section refinement of the best bracket; periodic
trajectories are searched within a +-1 s window around the sample's wall time
so multi-lap logs match against their own lap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import trajectory as trj
from .planner import Track
from .simulator import FlightLog
from .trajectory import TimeParamTrajectory

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class TrackingReport:
    rmse: float
    max_error: float
    tracking_time: Optional[float]
    lap_times: list = field(default_factory=list)
    sample_count: int = 0
    reached_final_waypoint: bool = True

    def summary(self) -> str:
        tt = "n/a" if self.tracking_time is None else f"{self.tracking_time:.3f} s"
        lines = [
            f"rmse            : {self.rmse:.4f} m",
            f"max_error       : {self.max_error:.4f} m",
            f"tracking_time   : {tt}",
            f"samples         : {self.sample_count}",
        ]
        if self.lap_times:
            lines.append("lap_times       : " + ", ".join(f"{t:.3f}" for t in self.lap_times))
        if not self.reached_final_waypoint:
            lines.append("warning         : final waypoint never reached")
        return "\n".join(lines)


def _golden_refine(traj, p, lo, hi, iters=60):
    a, b = lo, hi
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc = _dist(traj, p, c)
    fd = _dist(traj, p, d)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = _dist(traj, p, c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = _dist(traj, p, d)
        if b - a < 1e-12:
            break
    return min(fc, fd)


def _dist(traj, p, t):
    pos, _ = trj.sample_many(traj, np.array([t]))
    return float(np.linalg.norm(pos[0] - p))


def min_distances(log: FlightLog, traj: TimeParamTrajectory, grid_dt: float = 1e-3) -> np.ndarray:
    """Per-sample minimum distance to the trajectory."""
    if log.n_records == 0:
        raise ValueError("empty flight log")
    T = traj.duration
    out = np.empty(log.n_records)
    positions = log.positions()
    for i in range(log.n_records):
        p = positions[i]
        if traj.periodic:
            center = log.t[i]
            ts = np.arange(center - 1.0, center + 1.0 + grid_dt, grid_dt)
        else:
            ts = np.arange(0.0, T + grid_dt, grid_dt)
        pos, _ = trj.sample_many(traj, ts)
        d = np.linalg.norm(pos - p, axis=1)
        j = int(np.argmin(d))
        lo = ts[max(0, j - 1)]
        hi = ts[min(len(ts) - 1, j + 1)]
        out[i] = min(float(d[j]), _golden_refine(traj, p, lo, hi))
    return out


def rmse(log: FlightLog, traj: TimeParamTrajectory) -> float:
    """Root-mean-square of the per-sample minimum distances."""
    d = min_distances(log, traj)
    return float(np.sqrt(np.mean(d * d)))


def max_error(log: FlightLog, traj: TimeParamTrajectory) -> float:
    """Largest per-sample minimum distance."""
    return float(np.max(min_distances(log, traj)))


def tracking_time(log: FlightLog, track: Track):
    """Per-lap times of first entry into the final waypoint's tolerance ball.

    Returns (lap_times, reached).  A passage begins when the vehicle enters
    the ball after having been outside it; an initial dwell inside the ball
    (hover start at the loop-closure corner) does not count.
    """
    if log.n_records == 0:
        raise ValueError("empty flight log")
    target = track.waypoints[-1]
    delta = track.tolerances[-1]
    d = np.linalg.norm(log.positions() - target, axis=1)
    inside = d <= delta
    passages = []
    armed = not inside[0]
    for i in range(log.n_records):
        if inside[i] and armed:
            passages.append(log.t[i])
            armed = False
        elif not inside[i]:
            armed = True
    if not passages:
        return [], False
    lap_times = np.diff(np.concatenate([[0.0], passages])).tolist()
    return lap_times, True


def evaluate(log: FlightLog, traj: TimeParamTrajectory, track: Track) -> TrackingReport:
    """Full tracking report for a closed-loop run."""
    d = min_distances(log, traj)
    laps, reached = tracking_time(log, track)
    return TrackingReport(
        rmse=float(np.sqrt(np.mean(d * d))),
        max_error=float(np.max(d)),
        tracking_time=laps[0] if reached else None,
        lap_times=laps,
        sample_count=len(d),
        reached_final_waypoint=reached,
    )
