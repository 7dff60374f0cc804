"""Shared synthetic fixtures for tests that don't need real solver output."""

import numpy as np

from quadfly.dynamics import QuadrotorParams, State
from quadfly.planner import Allocation, PlanResult, Track

PARAMS = QuadrotorParams.defaults()


def synthetic_plan(periodic=False, n=8, dt=0.25):
    """Hand-built plan whose nodes trace a smooth arc (not solver output)."""
    t = dt * np.arange(n + 1)
    X = np.zeros((n + 1, 13))
    X[:, 0] = np.sin(t)
    X[:, 1] = 0.5 * t
    X[:, 2] = -1.0 + 0.1 * np.cos(t)
    X[:, 3] = np.cos(t)
    X[:, 4] = 0.5
    X[:, 5] = -0.1 * np.sin(t)
    X[:, 6] = 1.0
    track = Track(
        waypoints=X[-1:, :3].copy(),
        tolerances=np.array([0.1]),
        start_state=State.from_array(X[0]),
        periodic=periodic,
        node_density=0.1,
    )
    return PlanResult(
        node_states=X,
        node_inputs=np.full((n, 4), PARAMS.hover_thrust),
        segment_dts=np.array([dt]),
        allocation=Allocation(np.array([n]), np.array([n]), n),
        total_time=float(n * dt),
        waypoint_errors=np.zeros(1),
        solve_report={},
        defect_inf=0.0,
        track=track,
        params=PARAMS,
    )


def straight_line_plan(length=4.0, speed=2.0, n=16):
    """Constant-velocity straight line along x at fixed altitude."""
    dt = length / speed / n
    t = dt * np.arange(n + 1)
    X = np.zeros((n + 1, 13))
    X[:, 0] = speed * t
    X[:, 2] = -1.0
    X[:, 3] = speed
    X[:, 6] = 1.0
    track = Track(
        waypoints=np.array([[length, 0.0, -1.0]]),
        tolerances=np.array([0.1]),
        start_state=State.from_array(X[0]),
        periodic=False,
        node_density=0.2,
    )
    return PlanResult(
        node_states=X,
        node_inputs=np.full((n, 4), PARAMS.hover_thrust),
        segment_dts=np.array([dt]),
        allocation=Allocation(np.array([n]), np.array([n]), n),
        total_time=float(n * dt),
        waypoint_errors=np.zeros(1),
        solve_report={},
        defect_inf=0.0,
        track=track,
        params=PARAMS,
    )


def hover_plan(position=(0.0, 0.0, -1.0), n=10, dt=0.5):
    """Degenerate hold trajectory: every node at the same hover point."""
    X = np.zeros((n + 1, 13))
    X[:, :3] = np.asarray(position)
    X[:, 6] = 1.0
    track = Track(
        waypoints=np.array([np.asarray(position) + [1e9, 0, 0]]),  # placeholder, far away
        tolerances=np.array([0.1]),
        start_state=State.from_array(X[0]),
        periodic=False,
        node_density=0.5,
    )
    # hold trajectories are allowed to ignore waypoint semantics
    track.waypoints = np.array([np.asarray(position, dtype=float)])
    return PlanResult(
        node_states=X,
        node_inputs=np.full((n, 4), PARAMS.hover_thrust),
        segment_dts=np.array([dt]),
        allocation=Allocation(np.array([n]), np.array([n]), n),
        total_time=float(n * dt),
        waypoint_errors=np.zeros(1),
        solve_report={},
        defect_inf=0.0,
        track=track,
        params=PARAMS,
    )
