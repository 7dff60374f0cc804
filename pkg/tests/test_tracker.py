"""Tests for the NMPC and time-adaptive MPC steps."""

import numpy as np
import pytest

from quadfly.dynamics import ControlInput, QuadrotorParams, State, rk4_step
from quadfly.tracker import (
    ControllerState,
    MpcConfig,
    TmpcConfig,
    build_mpc_references,
    make_controller,
    nmpc_step,
    plan_input_reference,
    plan_state_reference,
    tmpc_step,
)
from quadfly.trajectory import from_plan, sample

from .helpers import hover_plan, straight_line_plan

PARAMS = QuadrotorParams.defaults()


def small_mpc_cfg(**kw):
    return MpcConfig(horizon=8, **kw)


def small_tmpc_cfg(**kw):
    return TmpcConfig(horizon=8, **kw)


def hover_refs(cfg, position=(0.0, 0.0, -1.0)):
    x = State.hover(position)
    u = ControlInput.hover(PARAMS)
    return [(x, u)] * cfg.horizon


class TestNmpcStep:
    def test_hover_equilibrium(self):
        cfg = small_mpc_cfg()
        x = State.hover([0, 0, -1])
        ctl = make_controller(x, PARAMS, cfg)
        u, ctl = nmpc_step(x, hover_refs(cfg), cfg, ctl)
        np.testing.assert_allclose(u.thrusts, np.full(4, PARAMS.hover_thrust), atol=1e-6)
        assert not ctl.fallback

    def test_climb_needs_extra_thrust(self):
        cfg = small_mpc_cfg()
        x = State.hover([0, 0, -1.0])
        ctl = make_controller(x, PARAMS, cfg)
        refs = hover_refs(cfg, position=(0.0, 0.0, -2.0))  # one meter higher (z down)
        u, _ = nmpc_step(x, refs, cfg, ctl)
        assert u.thrusts.sum() > PARAMS.mass * PARAMS.gravity

    def test_u0_within_bounds_for_aggressive_reference(self):
        cfg = small_mpc_cfg()
        x = State.hover([0, 0, -1])
        ctl = make_controller(x, PARAMS, cfg)
        refs = hover_refs(cfg, position=(50.0, 0.0, -1.0))
        u, _ = nmpc_step(x, refs, cfg, ctl)
        assert np.all(u.thrusts >= PARAMS.thrust_min - 1e-12)
        assert np.all(u.thrusts <= PARAMS.thrust_max + 1e-12)

    def test_fallback_on_bad_reference(self):
        cfg = small_mpc_cfg()
        x = State.hover([0, 0, -1])
        ctl = make_controller(x, PARAMS, cfg)
        bad = State.hover([0, 0, -1])
        bad.p[0] = np.nan
        refs = [(bad, ControlInput.hover(PARAMS))] * cfg.horizon
        u, ctl = nmpc_step(x, refs, cfg, ctl)
        assert ctl.fallback
        np.testing.assert_allclose(u.thrusts, np.full(4, PARAMS.hover_thrust), atol=1e-12)

    def test_wrong_ref_count_rejected(self):
        cfg = small_mpc_cfg()
        x = State.hover([0, 0, -1])
        ctl = make_controller(x, PARAMS, cfg)
        with pytest.raises(ValueError):
            nmpc_step(x, hover_refs(cfg)[:3], cfg, ctl)


class TestTmpcStep:
    def test_hold_trajectory_keeps_hover(self):
        traj = from_plan(hover_plan())
        cfg = small_tmpc_cfg()
        x = State.hover([0, 0, -1])
        ctl = make_controller(x, PARAMS, cfg)
        u, t0, ctl = tmpc_step(x, traj, cfg, ctl)
        np.testing.assert_allclose(u.thrusts, np.full(4, PARAMS.hover_thrust), atol=1e-5)

    def test_flat_objective_tie_break(self):
        # hold trajectory: cost independent of t0, the tiny regularizer pins
        # the solution at the anchored nominal advance
        traj = from_plan(hover_plan())
        cfg = small_tmpc_cfg()
        x = State.hover([0, 0, -1])
        ctl = make_controller(x, PARAMS, cfg, t0=1.0)
        _, t0_star, _ = tmpc_step(x, traj, cfg, ctl)
        assert abs(t0_star - (1.0 + cfg.t0_advance_default)) <= cfg.t0_window
        assert 1.0 - cfg.t0_window <= t0_star <= 1.0 + cfg.t0_window

    def test_on_trajectory_progress_estimate(self):
        plan = straight_line_plan(speed=2.0)
        traj = from_plan(plan)
        cfg = small_tmpc_cfg()
        tau = 0.8
        pos, vel = sample(traj, tau)
        x = State(p=pos, v=vel, q=np.array([1.0, 0, 0, 0]), omega=np.zeros(3))
        ctl = make_controller(x, PARAMS, cfg, t0=tau - 0.01)
        _, t0_star, _ = tmpc_step(x, traj, cfg, ctl)
        # the first predicted state sits one control period ahead
        assert t0_star == pytest.approx(tau + cfg.control_dt, abs=8e-3)

    def test_t0_stays_in_window(self):
        traj = from_plan(straight_line_plan())
        cfg = small_tmpc_cfg()
        x = State.hover([0, 0, -1])
        ctl = make_controller(x, PARAMS, cfg, t0=0.5)
        _, t0_star, _ = tmpc_step(x, traj, cfg, ctl)
        assert 0.5 - cfg.t0_window - 1e-12 <= t0_star <= 0.5 + cfg.t0_window + 1e-12


class TestControllerState:
    def test_shift_duplicates_last_stage(self):
        cfg = small_mpc_cfg()
        ctl = make_controller(State.hover([0, 0, -1]), PARAMS, cfg)
        X = np.arange(8 * 13, dtype=float).reshape(8, 13)
        U = np.arange(8 * 4, dtype=float).reshape(8, 4)
        ctl.shift(X, U)
        np.testing.assert_array_equal(ctl.states[:-1], X[1:])
        np.testing.assert_array_equal(ctl.states[-1], X[-1])
        np.testing.assert_array_equal(ctl.inputs[:-1], U[1:])
        np.testing.assert_array_equal(ctl.inputs[-1], U[-1])

    def test_warm_start_reduces_effort(self):
        traj = from_plan(straight_line_plan())
        cfg = small_tmpc_cfg()
        x = State.hover([0, 0, -1])
        ctl = make_controller(x, PARAMS, cfg)
        _, _, ctl = tmpc_step(x, traj, cfg, ctl)
        first = ctl.last_n_evals
        assert ctl.cold is False
        for _ in range(2):
            _, _, ctl = tmpc_step(x, traj, cfg, ctl)
        assert ctl.last_n_evals < first

    def test_controller_sees_only_nominal_params(self):
        cfg = small_mpc_cfg()
        ctl = make_controller(State.hover([0, 0, -1]), PARAMS, cfg)
        assert ctl.params is PARAMS


class TestReferences:
    def test_state_reference_at_knots(self):
        plan = straight_line_plan()
        traj = from_plan(plan)
        knots = plan.knot_times()
        for k in (0, 3, len(knots) - 1):
            ref = plan_state_reference(plan, traj, float(knots[k]))
            np.testing.assert_allclose(ref, plan.node_states[k], atol=1e-9)

    def test_input_reference_zero_order_hold(self):
        plan = straight_line_plan()
        plan.node_inputs[3] = np.array([1.0, 2.0, 3.0, 4.0])
        knots = plan.knot_times()
        t_inside = 0.5 * (knots[3] + knots[4])
        np.testing.assert_array_equal(plan_input_reference(plan, t_inside), [1.0, 2.0, 3.0, 4.0])

    def test_build_refs_slowed_clock(self):
        plan = straight_line_plan(speed=2.0)
        traj = from_plan(plan)
        cfg = small_mpc_cfg(rate_factor=0.5)
        refs = build_mpc_references(plan, traj, 0.0, cfg)
        # stage k sits at (k+1) * 0.5 * control_dt along the line at 2 m/s
        expected_x = 2.0 * (np.arange(1, cfg.horizon + 1) * 0.5 * cfg.control_dt)
        got_x = np.array([r[0].p[0] for r in refs])
        np.testing.assert_allclose(got_x, expected_x, atol=1e-9)
