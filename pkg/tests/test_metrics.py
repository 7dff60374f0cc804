"""Tests for the tracking metrics against brute-force oracles."""

import numpy as np
import pytest

from quadfly.metrics import evaluate, max_error, min_distances, rmse, tracking_time
from quadfly.simulator import FlightLog
from quadfly.trajectory import from_plan, sample_many

from .helpers import hover_plan, straight_line_plan, synthetic_plan


def make_log(ts, positions):
    n = len(ts)
    states = np.zeros((n, 13))
    states[:, :3] = positions
    states[:, 6] = 1.0
    return FlightLog(
        t=np.asarray(ts, dtype=float),
        states=states,
        inputs=np.zeros((n, 4)),
        ref_positions=positions.copy(),
        t0=np.zeros(n),
        solve_ms=np.zeros(n),
        replan_flag=np.zeros(n),
    )


def brute_force_min_distances(log, traj, grid_dt=1e-4):
    out = np.empty(log.n_records)
    for i in range(log.n_records):
        if traj.periodic:
            ts = np.arange(log.t[i] - 1.0, log.t[i] + 1.0 + grid_dt, grid_dt)
        else:
            ts = np.arange(0.0, traj.duration + grid_dt, grid_dt)
        pos, _ = sample_many(traj, ts)
        out[i] = np.min(np.linalg.norm(pos - log.positions()[i], axis=1))
    return out


class TestRmse:
    def test_zero_on_exact_samples(self):
        traj = from_plan(synthetic_plan())
        ts = np.linspace(0.0, traj.duration, 25)
        pos, _ = sample_many(traj, ts)
        assert rmse(make_log(ts, pos), traj) <= 1e-9

    def test_constant_perpendicular_offset(self):
        traj = from_plan(straight_line_plan())
        ts = np.linspace(0.2, traj.duration - 0.2, 15)
        pos, _ = sample_many(traj, ts)
        pos[:, 1] += 0.1  # perpendicular to the x-axis line
        assert rmse(make_log(ts, pos), traj) == pytest.approx(0.1, abs=1e-6)

    def test_single_sample_distance(self):
        traj = from_plan(hover_plan())
        log = make_log([0.0], np.array([[0.7, 0.0, -1.0]]))
        assert rmse(log, traj) == pytest.approx(0.7, abs=1e-9)

    def test_matches_brute_force_oracle(self):
        traj = from_plan(synthetic_plan(n=4, dt=0.25))  # 1 s trajectory
        rng = np.random.default_rng(3)
        ts = np.linspace(0.0, traj.duration, 11)
        pos, _ = sample_many(traj, ts)
        pos += rng.normal(scale=0.05, size=pos.shape)
        log = make_log(ts, pos)
        mine = min_distances(log, traj)
        oracle = brute_force_min_distances(log, traj)
        np.testing.assert_allclose(mine, oracle, atol=1e-6)

    def test_periodic_windowing(self):
        traj = from_plan(synthetic_plan(periodic=True))
        # sample from the second lap matches against its own lap window
        t_second_lap = traj.duration + 0.4
        pos, _ = sample_many(traj, [0.4])
        log = make_log([t_second_lap], pos)
        assert rmse(log, traj) <= 1e-9

    def test_empty_log_rejected(self):
        traj = from_plan(synthetic_plan())
        log = make_log(np.zeros(0), np.zeros((0, 3)))
        with pytest.raises(ValueError):
            rmse(log, traj)


class TestMaxError:
    def test_zero_on_exact(self):
        traj = from_plan(synthetic_plan())
        ts = np.linspace(0.0, traj.duration, 10)
        pos, _ = sample_many(traj, ts)
        assert max_error(make_log(ts, pos), traj) <= 1e-9

    def test_single_outlier(self):
        traj = from_plan(straight_line_plan())
        ts = np.linspace(0.2, traj.duration - 0.2, 10)
        pos, _ = sample_many(traj, ts)
        pos[4, 2] += 0.3
        assert max_error(make_log(ts, pos), traj) == pytest.approx(0.3, abs=1e-6)

    def test_max_at_least_rmse(self):
        traj = from_plan(synthetic_plan())
        rng = np.random.default_rng(8)
        ts = np.linspace(0.0, traj.duration, 20)
        pos, _ = sample_many(traj, ts)
        pos += rng.normal(scale=0.03, size=pos.shape)
        log = make_log(ts, pos)
        assert max_error(log, traj) >= rmse(log, traj)


class TestTrackingTime:
    def test_two_lap_passages(self):
        plan = synthetic_plan()
        track = plan.track
        target = track.waypoints[-1]
        ts = np.arange(0.0, 20.0, 0.1)
        pos = np.tile(target + np.array([1.0, 0, 0]), (len(ts), 1))
        # inside the ball exactly at 8.0 and 16.1
        for t_pass in (8.0, 16.1):
            idx = int(round(t_pass / 0.1))
            pos[idx] = target
        laps, reached = tracking_time(make_log(ts, pos), track)
        assert reached
        np.testing.assert_allclose(laps, [8.0, 8.1], atol=1e-9)

    def test_never_reached_flagged(self):
        plan = synthetic_plan()
        track = plan.track
        ts = np.arange(0.0, 5.0, 0.1)
        pos = np.tile(track.waypoints[-1] + np.array([2.0, 0, 0]), (len(ts), 1))
        laps, reached = tracking_time(make_log(ts, pos), track)
        assert not reached and laps == []

    def test_initial_dwell_not_counted(self):
        plan = synthetic_plan()
        track = plan.track
        target = track.waypoints[-1]
        ts = np.arange(0.0, 10.0, 0.1)
        pos = np.tile(target, (len(ts), 1))  # starts inside the ball
        pos[20:60] += np.array([1.0, 0, 0])  # leaves, then returns at t=6.0
        laps, reached = tracking_time(make_log(ts, pos), track)
        assert reached
        assert laps == pytest.approx([6.0])


class TestEvaluate:
    def test_report_fields(self):
        traj = from_plan(synthetic_plan())
        plan = synthetic_plan()
        ts = np.linspace(0.0, traj.duration, 30)
        pos, _ = sample_many(traj, ts)
        report = evaluate(make_log(ts, pos), traj, plan.track)
        assert report.rmse <= report.max_error
        assert report.sample_count == 30
        assert report.reached_final_waypoint
        assert "rmse" in report.summary()
