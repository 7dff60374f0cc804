"""Tests for the cubic time-parameterized trajectory."""

import numpy as np
import pytest

from quadfly.dynamics import QuadrotorParams, State
from quadfly.planner import Allocation, PlanResult, Track
from quadfly.trajectory import from_plan, sample, sample_many, sample_reference

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


class TestFromPlan:
    def test_knot_interpolation_exact(self):
        plan = synthetic_plan()
        traj = from_plan(plan)
        for k, t in enumerate(traj.knot_times):
            pos, vel = sample(traj, float(t))
            np.testing.assert_allclose(pos, plan.node_states[k, :3], atol=1e-12)
            np.testing.assert_allclose(vel, plan.node_states[k, 3:6], atol=1e-10)

    def test_one_sided_derivatives_match_at_interior_knots(self):
        traj = from_plan(synthetic_plan())
        eps = 1e-7
        for t in traj.knot_times[1:-1]:
            _, v_left = sample(traj, float(t) - eps)
            _, v_right = sample(traj, float(t) + eps)
            np.testing.assert_allclose(v_left, v_right, atol=1e-5)
            np.testing.assert_allclose(v_left, sample(traj, float(t))[1], atol=1e-5)

    def test_single_interval_midpoint(self):
        # p0=0, p1=1, v0=v1=0 over dt=1: the Hermite cubic passes 0.5 at t=0.5
        plan = synthetic_plan(n=2, dt=1.0)
        plan.node_states[:] = 0.0
        plan.node_states[:, 6] = 1.0
        plan.node_states[1, 0] = 1.0
        plan.node_states[2, 0] = 1.0
        traj = from_plan(plan)
        pos, _ = sample(traj, 0.5)
        assert pos[0] == pytest.approx(0.5, abs=1e-12)

    def test_duration_matches_plan(self):
        plan = synthetic_plan()
        assert from_plan(plan).duration == pytest.approx(plan.total_time)


class TestSample:
    def test_start_point(self):
        plan = synthetic_plan()
        traj = from_plan(plan)
        pos, vel = sample(traj, 0.0)
        np.testing.assert_allclose(pos, plan.node_states[0, :3], atol=1e-14)
        np.testing.assert_allclose(vel, plan.node_states[0, 3:6], atol=1e-14)

    def test_periodic_wraps(self):
        traj = from_plan(synthetic_plan(periodic=True))
        p1, v1 = sample(traj, traj.duration + 0.3)
        p2, v2 = sample(traj, 0.3)
        np.testing.assert_allclose(p1, p2, atol=1e-12)
        np.testing.assert_allclose(v1, v2, atol=1e-12)

    def test_clamp_hold_past_end(self):
        traj = from_plan(synthetic_plan(periodic=False))
        pos, vel = sample(traj, traj.duration + 5.0)
        np.testing.assert_allclose(pos, traj.positions[-1], atol=1e-12)
        np.testing.assert_allclose(vel, np.zeros(3), atol=1e-14)

    def test_batched_matches_scalar(self):
        traj = from_plan(synthetic_plan())
        ts = np.linspace(-0.5, traj.duration + 0.5, 37)
        pos, vel = sample_many(traj, ts)
        for i, t in enumerate(ts):
            p, v = sample(traj, float(t))
            np.testing.assert_array_equal(pos[i], p)
            np.testing.assert_array_equal(vel[i], v)


class TestSampleReference:
    def test_single_point(self):
        traj = from_plan(synthetic_plan())
        refs = sample_reference(traj, 0.7, 0.02, 1)
        np.testing.assert_allclose(refs[0], sample(traj, 0.7)[0])

    def test_endpoints(self):
        traj = from_plan(synthetic_plan())
        H = 11
        refs = sample_reference(traj, 0.0, traj.duration / (H - 1), H)
        np.testing.assert_allclose(refs[0], traj.positions[0], atol=1e-12)
        np.testing.assert_allclose(refs[-1], traj.positions[-1], atol=1e-10)

    def test_shift_identity(self):
        traj = from_plan(synthetic_plan())
        rng = np.random.default_rng(2)
        for _ in range(5):
            t0 = rng.uniform(0, traj.duration)
            delta = rng.uniform(-0.2, 0.2)
            refs = sample_reference(traj, t0 + delta, 0.05, 7)
            for k in range(7):
                np.testing.assert_allclose(refs[k], sample(traj, t0 + delta + k * 0.05)[0])

    def test_rejects_bad_args(self):
        traj = from_plan(synthetic_plan())
        with pytest.raises(ValueError):
            sample_reference(traj, 0.0, -0.1, 5)
        with pytest.raises(ValueError):
            sample_reference(traj, 0.0, 0.1, 0)
