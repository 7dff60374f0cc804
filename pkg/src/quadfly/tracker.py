"""Receding-horizon trackers over the full dynamics.

Two controllers share the same multiple-shooting machinery: a standard NMPC
tracking resampled full-state/input references with quadratic weights, and a
time-adaptive MPC whose decision variables additionally include the initial
reference sampling time t0, so the controller chooses where along the planned
trajectory it currently is.  Both warm-start states, inputs, and multipliers
from the previous step shifted by one stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import dynamics as dyn
from . import trajectory as trj
from .dynamics import INPUT_DIM, QUAT, STATE_DIM, ControlInput, QuadrotorParams, State
from .nlp import NlpProblem, SolverOptions, solve
from .planner import PlanResult
from .trajectory import TimeParamTrajectory


def _default_mpc_solver_options():
    # steady-state budget: warm starts keep this cheap
    return SolverOptions(
        tol_stationarity=1e-3,
        tol_feasibility=1e-6,
        max_outer_iters=2,
        max_inner_iters=150,
        initial_penalty=1e3,
        penalty_max=1e7,
    )


def _default_cold_solver_options():
    # first solve after handoff has no previous solution to lean on
    return SolverOptions(
        tol_stationarity=2e-4,
        tol_feasibility=1e-6,
        max_outer_iters=5,
        max_inner_iters=600,
        initial_penalty=1e3,
        penalty_max=1e7,
    )


def _default_state_weights():
    return np.concatenate([np.full(3, 200.0), np.full(3, 10.0), np.full(4, 1.0), np.full(3, 1.0)])


@dataclass
class MpcConfig:
    horizon: int = 20
    control_dt: float = 0.02
    state_weights: np.ndarray = field(default_factory=_default_state_weights)
    input_weights: np.ndarray = field(default_factory=lambda: np.full(4, 0.1))
    pos_bound: float = 100.0
    vel_bound: float = 25.0
    omega_bound: float = 10.0
    quat_bound: float = 1.05
    rate_factor: float = 0.97  # reference-clock slow-down of the baseline tracker
    solver_options: SolverOptions = field(default_factory=_default_mpc_solver_options)
    cold_solver_options: SolverOptions = field(default_factory=_default_cold_solver_options)

    def __post_init__(self):
        self.state_weights = np.asarray(self.state_weights, dtype=float)
        self.input_weights = np.asarray(self.input_weights, dtype=float)
        if self.horizon < 2:
            raise ValueError("horizon must be at least 2")
        if self.control_dt <= 0:
            raise ValueError("control_dt must be positive")
        if np.any(self.state_weights < 0) or np.any(self.input_weights <= 0):
            raise ValueError("need Q >= 0 and R > 0")

    def state_box(self):
        lb = np.concatenate(
            [
                np.full(3, -self.pos_bound),
                np.full(3, -self.vel_bound),
                np.full(4, -self.quat_bound),
                np.full(3, -self.omega_bound),
            ]
        )
        return lb, -lb


@dataclass
class TmpcConfig(MpcConfig):
    t0_window: float = 0.1  # search half-width around the previous t0, seconds
    t0_advance_default: Optional[float] = None  # defaults to control_dt
    t0_tie_weight: float = 1e-8

    def __post_init__(self):
        super().__post_init__()
        if self.t0_window <= 0:
            raise ValueError("t0_window must be positive")
        if self.t0_advance_default is None:
            self.t0_advance_default = self.control_dt


@dataclass
class ControllerState:
    """Warm-start carrier: previous solution shifted one stage forward."""

    states: np.ndarray  # (H, 13)
    inputs: np.ndarray  # (H, 4)
    t0: float = 0.0
    eq_multipliers: Optional[np.ndarray] = None
    penalty: float = 0.0
    ref_clock: float = 0.0  # baseline tracker reference time
    cold: bool = True
    last_status: str = ""
    last_violation: float = 0.0
    last_n_evals: int = 0
    fallback: bool = False

    @classmethod
    def initialize(cls, x: State, params: QuadrotorParams, cfg: MpcConfig, t0: float = 0.0):
        """Hover-input rollout from the current state as the first warm start."""
        H = cfg.horizon
        X = np.empty((H, STATE_DIM))
        U = np.full((H, INPUT_DIM), params.hover_thrust)
        cur = x.as_array()
        for k in range(H):
            cur = dyn.rk4_step_arrays(cur, U[k], cfg.control_dt, params)
            X[k] = cur
        return cls(states=X, inputs=U, t0=t0)

    def shift(self, sol_states, sol_inputs, t0=None, advance=0.0):
        self.states = np.vstack([sol_states[1:], sol_states[-1]])
        self.inputs = np.vstack([sol_inputs[1:], sol_inputs[-1]])
        if self.eq_multipliers is not None:
            lam = self.eq_multipliers.reshape(-1, STATE_DIM)
            self.eq_multipliers = np.vstack([lam[1:], lam[-1]]).ravel()
        if t0 is not None:
            self.t0 = t0 + advance


class _HorizonPattern:
    """Sparsity pattern of the horizon shooting Jacobian (no dt columns)."""

    def __init__(self, horizon: int, extra_cols: int = 0):
        s = STATE_DIM
        H = horizon
        self.u0 = s * H
        self.dim = s * H + INPUT_DIM * H + extra_cols
        rows, cols = [], []
        base = s * np.arange(H)[:, None]
        rows.append((base + np.arange(s)).ravel())
        cols.append((base + np.arange(s)).ravel())
        # -A_k on x_k applies for k >= 1 only; x_0 is a parameter
        base1 = s * np.arange(1, H)[:, None]
        rows.append((base1[:, :, None] + np.repeat(np.arange(s), s)[None]).ravel())
        cols.append((s * np.arange(H - 1)[:, None] + np.tile(np.arange(s), s)[None]).ravel())
        rows.append((base[:, :, None] + np.repeat(np.arange(s), INPUT_DIM)[None]).ravel())
        cols.append(
            (self.u0 + INPUT_DIM * np.arange(H)[:, None] + np.tile(np.arange(INPUT_DIM), s)[None]).ravel()
        )
        self.rows = np.concatenate(rows)
        self.cols = np.concatenate(cols)
        self.shape = (s * H, self.dim)
        template = sp.coo_matrix(
            (np.arange(len(self.rows), dtype=float), (self.rows, self.cols)), shape=self.shape
        ).tocsr()
        self.perm = template.data.astype(np.intp)
        self.indices = template.indices
        self.indptr = template.indptr

    def assemble(self, A, B):
        data = np.concatenate(
            [np.ones(STATE_DIM * A.shape[0]), (-A[1:]).reshape(-1), (-B).reshape(-1)]
        )
        return sp.csr_matrix((data[self.perm], self.indices, self.indptr), shape=self.shape)


def _horizon_dynamics(z, x0, cfg, params, pattern, extra_cols=0):
    H = cfg.horizon
    X = z[: STATE_DIM * H].reshape(H, STATE_DIM)
    U = z[STATE_DIM * H : STATE_DIM * H + INPUT_DIM * H].reshape(H, INPUT_DIM)
    X_prev = np.vstack([x0, X[:-1]])
    pred, A, B, _ = dyn.rk4_step_with_jacobians_arrays(
        X_prev, U, np.full(H, cfg.control_dt), params, renormalize=True
    )
    h = (X - pred).ravel()
    return h, pattern.assemble(A, B)


def _horizon_bounds(cfg, params, extra_cols=0):
    H = cfg.horizon
    slb, sub = cfg.state_box()
    lb = np.concatenate([np.tile(slb, H), np.full(INPUT_DIM * H, params.thrust_min), np.full(extra_cols, -np.inf)])
    ub = np.concatenate([np.tile(sub, H), np.full(INPUT_DIM * H, params.thrust_max), np.full(extra_cols, np.inf)])
    return lb, ub


def _run_horizon_solve(problem, z0, cfg, ctl):
    warm = None
    if ctl.eq_multipliers is not None and ctl.eq_multipliers.size == STATE_DIM * cfg.horizon:
        warm = {"eq_multipliers": ctl.eq_multipliers, "penalty": ctl.penalty or None}
    opts = cfg.cold_solver_options if ctl.cold else cfg.solver_options
    sol = solve(problem, z0, opts, warm_start=warm)
    ok = sol.status != "diverged" and sol.eq_violation_inf <= 1e-2
    return sol, ok


def nmpc_step(x: State, refs, cfg: MpcConfig, ctl: ControllerState):
    """One fixed-time NMPC step; refs is a length-H list of (State, ControlInput).

    Returns (u0, ctl); on solver failure the previous shifted input is used
    and ctl.fallback is set.
    """
    H = cfg.horizon
    if len(refs) != H:
        raise ValueError("need exactly one reference per horizon stage")
    Xref = np.stack([r[0].as_array() for r in refs])
    Uref = np.stack([r[1].as_array() for r in refs])
    params = _require_params(ctl)
    # match the reference quaternion hemisphere to the warm start
    flip = np.sum(Xref[:, QUAT] * ctl.states[:, QUAT], axis=1) < 0
    Xref[flip, QUAT.start : QUAT.stop] *= -1.0

    pattern = _HorizonPattern(H)
    Q = cfg.state_weights
    R = cfg.input_weights
    x0 = x.as_array()

    def objective(z):
        X = z[: STATE_DIM * H].reshape(H, STATE_DIM)
        U = z[STATE_DIM * H :].reshape(H, INPUT_DIM)
        dX = X - Xref
        dU = U - Uref
        value = float(np.sum(dX * dX * Q)) + float(np.sum(dU * dU * R))
        grad = np.concatenate([(2.0 * Q * dX).ravel(), (2.0 * R * dU).ravel()])
        return value, grad

    def eq(z):
        return _horizon_dynamics(z, x0, cfg, params, pattern)

    lb, ub = _horizon_bounds(cfg, params)
    problem = NlpProblem(
        dim=pattern.dim, objective=objective, eq_constraints=eq, lower_bounds=lb, upper_bounds=ub
    )
    z0 = np.concatenate([ctl.states.ravel(), ctl.inputs.ravel()])
    sol, ok = _run_horizon_solve(problem, z0, cfg, ctl)
    return _finish_step(sol, ok, cfg, ctl, params)


def tmpc_step(x: State, traj: TimeParamTrajectory, cfg: TmpcConfig, ctl: ControllerState):
    """One time-adaptive MPC step.

    Minimizes the summed squared distance between predicted positions and
    trajectory samples starting at the decision variable t0, then advances the
    stored t0 by the default advance for the next warm start.
    Returns (u0, t0_star, ctl).
    """
    H = cfg.horizon
    params = _require_params(ctl)
    pattern = _HorizonPattern(H, extra_cols=1)
    x0 = x.as_array()
    prev_t0 = ctl.t0
    anchor = prev_t0 + cfg.t0_advance_default
    w_tie = cfg.t0_tie_weight
    offsets = cfg.control_dt * np.arange(H)

    def objective(z):
        X = z[: STATE_DIM * H].reshape(H, STATE_DIM)
        t0 = z[-1]
        pos_ref, vel_ref = trj.sample_many(traj, t0 + offsets)
        dp = X[:, :3] - pos_ref
        value = float(np.sum(dp * dp)) + w_tie * (t0 - anchor) ** 2
        grad = np.zeros(pattern.dim)
        gX = np.zeros((H, STATE_DIM))
        gX[:, :3] = 2.0 * dp
        grad[: STATE_DIM * H] = gX.ravel()
        grad[-1] = -2.0 * float(np.sum(dp * vel_ref)) + 2.0 * w_tie * (t0 - anchor)
        return value, grad

    def eq(z):
        return _horizon_dynamics(z, x0, cfg, params, pattern, extra_cols=1)

    lb, ub = _horizon_bounds(cfg, params, extra_cols=1)
    lb[-1] = max(0.0, prev_t0 - cfg.t0_window)
    ub[-1] = prev_t0 + cfg.t0_window
    problem = NlpProblem(
        dim=pattern.dim, objective=objective, eq_constraints=eq, lower_bounds=lb, upper_bounds=ub
    )
    z0 = np.concatenate([ctl.states.ravel(), ctl.inputs.ravel(), [min(anchor, ub[-1])]])
    sol, ok = _run_horizon_solve(problem, z0, cfg, ctl)
    t0_star = float(sol.z_star[-1]) if ok else prev_t0
    u0, ctl = _finish_step(sol, ok, cfg, ctl, params, t0=t0_star)
    return u0, t0_star, ctl


def _finish_step(sol, ok, cfg, ctl, params, t0=None, advance=0.0):
    H = cfg.horizon
    if ok:
        X = sol.z_star[: STATE_DIM * H].reshape(H, STATE_DIM)
        U = sol.z_star[STATE_DIM * H : STATE_DIM * H + INPUT_DIM * H].reshape(H, INPUT_DIM)
        ctl.eq_multipliers = sol.eq_multipliers
        ctl.penalty = sol.final_penalty
        ctl.fallback = False
        ctl.cold = False
    else:
        X, U = ctl.states, ctl.inputs
        ctl.fallback = True
    u0 = np.clip(U[0].copy(), params.thrust_min, params.thrust_max)
    ctl.last_status = sol.status
    ctl.last_violation = sol.eq_violation_inf
    ctl.last_n_evals = sol.n_evals
    ctl.shift(X, U, t0=t0, advance=advance)
    return ControlInput(u0), ctl


def _require_params(ctl: ControllerState) -> QuadrotorParams:
    params = getattr(ctl, "params", None)
    if params is None:
        raise ValueError("controller state missing nominal params; use make_controller")
    return params


def make_controller(x: State, params: QuadrotorParams, cfg: MpcConfig, t0: float = 0.0) -> ControllerState:
    """Controller state bound to its nominal model."""
    ctl = ControllerState.initialize(x, params, cfg, t0=t0)
    ctl.params = params
    return ctl


# ---------------------------------------------------------------------------
# reference resampling for the baseline tracker
# ---------------------------------------------------------------------------


def plan_state_reference(plan: PlanResult, traj: TimeParamTrajectory, t: float) -> np.ndarray:
    """Full-state reference at time t: cubic position/velocity, interpolated
    attitude and rates from the plan nodes."""
    pos, vel = trj.sample(traj, t)
    knots = plan.knot_times()
    t_end = knots[-1]
    tt = np.mod(t, t_end) if plan.track.periodic else np.clip(t, 0.0, t_end)
    k = int(np.clip(np.searchsorted(knots, tt, side="right") - 1, 0, len(knots) - 2))
    s = (tt - knots[k]) / (knots[k + 1] - knots[k])
    qa = plan.node_states[k, QUAT]
    qb = plan.node_states[k + 1, QUAT]
    if qa @ qb < 0:
        qb = -qb
    q = (1.0 - s) * qa + s * qb
    q = q / np.linalg.norm(q)
    omega = (1.0 - s) * plan.node_states[k, 10:13] + s * plan.node_states[k + 1, 10:13]
    return np.concatenate([pos, vel, q, omega])


def plan_input_reference(plan: PlanResult, t: float) -> np.ndarray:
    """Zero-order-hold resampling of the plan's node inputs."""
    knots = plan.knot_times()
    t_end = knots[-1]
    tt = np.mod(t, t_end) if plan.track.periodic else np.clip(t, 0.0, t_end)
    k = int(np.clip(np.searchsorted(knots, tt, side="right") - 1, 0, plan.node_inputs.shape[0] - 1))
    return plan.node_inputs[k].copy()


def build_mpc_references(plan: PlanResult, traj: TimeParamTrajectory, tau: float, cfg: MpcConfig):
    """Horizon references for the baseline tracker whose clock sits at tau.

    Stage k gets the plan at tau + (k+1) * rate_factor * control_dt, so the
    reference advances slightly slower than real time.
    """
    step = cfg.rate_factor * cfg.control_dt
    refs = []
    for k in range(cfg.horizon):
        t = tau + (k + 1) * step
        refs.append(
            (State.from_array(plan_state_reference(plan, traj, t)), ControlInput(plan_input_reference(plan, t)))
        )
    return refs
