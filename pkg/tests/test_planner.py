"""Tests for node allocation, the two planning problems, and plan/replan."""

import dataclasses

import numpy as np
import pytest

from quadfly.dynamics import ControlInput, QuadrotorParams, State, rk4_step_arrays
from quadfly.nlp import SolverOptions, finite_diff_audit
from quadfly.planner import (
    Allocation,
    PlannerConfig,
    PlannerError,
    Track,
    allocate_nodes,
    build_time_optimal,
    build_warmup,
    load_plan,
    plan,
    plan_from_dict,
    plan_to_dict,
    replan,
    save_plan,
    _Layout,
)

PARAMS = QuadrotorParams.defaults()


def line_track(distance=4.0, tol=0.1, density=0.4):
    return Track(
        waypoints=np.array([[distance, 0.0, -1.0]]),
        tolerances=np.array([tol]),
        start_state=State.hover([0.0, 0.0, -1.0]),
        node_density=density,
    )


def two_leg_track(density=0.4):
    return Track(
        waypoints=np.array([[1.2, 0.0, -1.0], [1.2, 1.2, -1.0]]),
        tolerances=np.array([0.1, 0.1]),
        start_state=State.hover([0.0, 0.0, -1.0]),
        node_density=density,
    )


def fast_config(**overrides):
    cfg = PlannerConfig(
        warmup_options=SolverOptions(max_outer_iters=4, max_inner_iters=1500),
        main_options=SolverOptions(
            tol_feasibility=1e-7, tol_stationarity=1e-4, max_outer_iters=40, max_inner_iters=1500
        ),
    )
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


class TestTrack:
    def test_rejects_coincident_waypoints(self):
        with pytest.raises(ValueError):
            Track(
                waypoints=np.array([[1.0, 0, 0], [1.0, 0, 0]]),
                tolerances=np.array([0.1, 0.1]),
                start_state=State.hover([0, 0, 0]),
            )

    def test_rejects_bad_density(self):
        with pytest.raises(ValueError):
            Track(
                waypoints=np.array([[1.0, 0, 0]]),
                tolerances=np.array([0.1]),
                start_state=State.hover([0, 0, 0]),
                node_density=0.0,
            )

    def test_segment_lengths_include_start(self):
        t = two_leg_track()
        np.testing.assert_allclose(t.segment_lengths(), [1.2, 1.2])


class TestAllocateNodes:
    def test_floor_rule(self):
        t = line_track(distance=3.0, density=0.3)
        alloc = allocate_nodes(t)
        assert alloc.segment_counts.tolist() == [10]

    def test_cumulative_indices(self):
        alloc = Allocation(np.array([3, 5, 3]), np.array([3, 8, 11]), 11)
        assert alloc.cumulative_indices.tolist() == [3, 8, 11]
        assert alloc.total_nodes == 11
        # same numbers from the floor rule
        t = Track(
            waypoints=np.array([[3.5, 0, 0], [3.5, 5.5, 0], [3.5, 5.5, -3.5]]),
            tolerances=np.full(3, 0.1),
            start_state=State.hover([0, 0, 0]),
            node_density=1.0,
        )
        a = allocate_nodes(t)
        assert a.segment_counts.tolist() == [3, 5, 3]
        assert a.cumulative_indices.tolist() == [3, 8, 11]

    def test_clamp_to_two(self):
        t = line_track(distance=0.5, density=0.3)
        assert allocate_nodes(t).segment_counts.tolist() == [2]

    def test_segment_of_step(self):
        alloc = Allocation(np.array([3, 5, 3]), np.array([3, 8, 11]), 11)
        np.testing.assert_array_equal(
            alloc.segment_of_step(), [0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2]
        )


class TestBuildWarmup:
    def test_zero_objective_on_exact_rollout(self):
        # a zero-thrust free-fall rollout makes every penalty term vanish
        track = Track(
            waypoints=np.array([[0.0, 0.0, 3.0]]),
            tolerances=np.array([0.1]),
            start_state=State.hover([0.0, 0.0, 0.0]),
            node_density=0.3,
        )
        cfg = fast_config()
        alloc = allocate_nodes(track)
        n = alloc.total_nodes
        dt0 = 0.05
        cfg = dataclasses.replace(cfg, warmup_dt0=dt0)
        X = np.zeros((n + 1, 13))
        X[0] = track.start_state.as_array()
        U = np.zeros((n, 4))
        for k in range(n):
            X[k + 1] = rk4_step_arrays(X[k], U[k], dt0, PARAMS)
        rolled = dataclasses.replace(track, waypoints=X[alloc.cumulative_indices, :3].copy())
        problem = build_warmup(rolled, PARAMS, alloc, cfg)
        layout = _Layout(n, alloc.n_segments, free_dt=False)
        value, grad = problem.objective(layout.pack(X, U))
        assert value == pytest.approx(0.0, abs=1e-24)

    def test_gradient_matches_finite_differences(self):
        track = line_track(distance=1.2, density=0.4)
        cfg = fast_config(warmup_dt0=0.06)
        alloc = allocate_nodes(track)
        problem = build_warmup(track, PARAMS, alloc, cfg)
        rng = np.random.default_rng(0)
        z = rng.normal(scale=0.05, size=problem.dim)
        layout = _Layout(alloc.total_nodes, alloc.n_segments, free_dt=False)
        states = layout.states(z)
        states[:, 6] += 1.0  # keep quaternions near identity
        z = np.clip(z, problem.lower_bounds, problem.upper_bounds)
        assert finite_diff_audit(problem, z) <= 1e-5


class TestBuildTimeOptimal:
    def test_objective_is_weighted_dt_sum(self):
        track = two_leg_track()
        cfg = fast_config()
        alloc = Allocation(np.array([10, 20]), np.array([10, 30]), 30)
        problem = build_time_optimal(track, PARAMS, alloc, cfg)
        layout = _Layout(30, 2, free_dt=True)
        X = np.zeros((31, 13))
        X[:, 6] = 1.0  # unit quaternions keep the soft penalty at zero
        z = layout.pack(X, np.zeros((30, 4)), np.array([0.05, 0.08]))
        value, _ = problem.objective(z)
        assert value == pytest.approx(2.1)

    def test_waypoint_residual_strictly_feasible_at_center(self):
        track = line_track(tol=0.1)
        cfg = fast_config()
        alloc = allocate_nodes(track)
        problem = build_time_optimal(track, PARAMS, alloc, cfg)
        layout = _Layout(alloc.total_nodes, 1, free_dt=True)
        X = np.zeros((alloc.total_nodes + 1, 13))
        X[:, 6] = 1.0
        X[alloc.cumulative_indices[0], :3] = track.waypoints[0]
        z = layout.pack(X, np.zeros((alloc.total_nodes, 4)), np.array([0.05]))
        r, _ = problem.ineq_constraints(z)
        assert r[0] == pytest.approx(-0.01)

    def test_jacobians_match_finite_differences(self):
        track = line_track(distance=1.2, density=0.4)
        cfg = fast_config()
        alloc = allocate_nodes(track)
        problem = build_time_optimal(track, PARAMS, alloc, cfg)
        rng = np.random.default_rng(1)
        layout = _Layout(alloc.total_nodes, 1, free_dt=True)
        z = rng.normal(scale=0.05, size=problem.dim)
        layout.states(z)[:, 6] += 1.0
        layout.dts(z)[:] = 0.05
        z = np.clip(z, problem.lower_bounds, problem.upper_bounds)
        assert finite_diff_audit(problem, z) <= 1e-5


@pytest.fixture(scope="module")
def line_plan():
    return plan(line_track(), PARAMS, fast_config())


class TestPlan:
    def test_line_plan_converges(self, line_plan):
        p = line_plan
        assert p.solve_report["main"]["status"] == "converged"
        assert p.total_time < 4.0
        assert np.all(p.node_inputs >= PARAMS.thrust_min - 1e-6)
        assert np.all(p.node_inputs <= PARAMS.thrust_max + 1e-6)

    def test_plan_invariants(self, line_plan):
        p = line_plan
        assert p.total_time == float(p.allocation.segment_counts @ p.segment_dts)
        assert p.defect_inf <= 1e-6
        assert np.all(p.waypoint_errors <= p.track.tolerances + 1e-6)
        # allocation is the static floor-rule output
        np.testing.assert_array_equal(
            p.allocation.segment_counts, allocate_nodes(p.track).segment_counts
        )

    def test_independent_defect_audit(self, line_plan):
        p = line_plan
        X, U = p.node_states, p.node_inputs
        pred = rk4_step_arrays(X[:-1], U, p.step_dts(), PARAMS)
        assert np.max(np.abs(X[1:] - pred)) <= 1e-6

    def test_quaternions_unit(self, line_plan):
        norms = np.linalg.norm(line_plan.node_states[:, 6:10], axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-9)

    def test_relaxed_tolerances_no_slower(self, line_plan):
        relaxed = dataclasses.replace(line_track(), tolerances=np.array([1e6]))
        p_rel = plan(relaxed, PARAMS, fast_config())
        assert p_rel.total_time <= line_plan.total_time + 1e-6


class TestReplan:
    def test_identity_replan_is_cheap(self, line_plan):
        p2 = replan(line_track(), line_plan, PARAMS, fast_config())
        assert p2.solve_report["main"]["iterations"] <= 3
        assert abs(p2.total_time - line_plan.total_time) <= 1e-4

    def test_moved_waypoint(self, line_plan):
        moved = line_track()
        moved.waypoints = moved.waypoints + np.array([[0.0, 0.5, 0.0]])
        p2 = replan(moved, line_plan, PARAMS, fast_config())
        err = np.linalg.norm(p2.node_states[p2.allocation.cumulative_indices[0], :3] - moved.waypoints[0])
        assert err <= moved.tolerances[0] + 1e-6
        assert p2.solve_report["main"]["wall_time"] < line_plan.solve_report["main"]["wall_time"] + (
            line_plan.solve_report["warmup"]["wall_time"]
        )

    def test_topology_change_rejected(self, line_plan):
        with pytest.raises(PlannerError):
            replan(two_leg_track(), line_plan, PARAMS, fast_config())


class TestSerialization:
    def test_round_trip_lossless(self, line_plan, tmp_path):
        path = tmp_path / "plan.json"
        save_plan(line_plan, path)
        again = load_plan(path)
        np.testing.assert_array_equal(again.node_states, line_plan.node_states)
        np.testing.assert_array_equal(again.node_inputs, line_plan.node_inputs)
        np.testing.assert_array_equal(again.segment_dts, line_plan.segment_dts)
        assert again.total_time == line_plan.total_time
        # second write is byte-identical
        path2 = tmp_path / "plan2.json"
        save_plan(again, path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_dict_round_trip(self, line_plan):
        again = plan_from_dict(plan_to_dict(line_plan))
        np.testing.assert_array_equal(again.node_states, line_plan.node_states)
        assert again.params.mass == PARAMS.mass
