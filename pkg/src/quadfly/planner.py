"""Time-optimal waypoint trajectory planning.

Planning runs in two phases over a shared multiple-shooting grid whose node
counts are pre-assigned per segment from the waypoint spacing: first a
penalty warm-up (waypoint, dynamics-defect, and control-effort penalties with
a fixed step length, box constraints only), then the free-time problem that
minimizes the total flight time sum_i N_i dt_i with one sampling interval per
segment, hard shooting equalities, and quadratic waypoint-ball inequalities.

The waypoint-to-node allocation is computed once from the spatial node
density and never changes during a solve; replanning reuses the previous
allocation so the warm start lines up.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from . import dynamics as dyn
from .dynamics import INPUT_DIM, POS, QUAT, STATE_DIM, ControlInput, QuadrotorParams, State
from .nlp import CONVERGED, NlpProblem, NlpSolution, SolverOptions, solve


class PlannerError(RuntimeError):
    """Planning failed; `phase` names the failing stage."""

    def __init__(self, phase: str, message: str, solution: Optional[NlpSolution] = None):
        super().__init__(f"[{phase}] {message}")
        self.phase = phase
        self.solution = solution


@dataclass
class Track:
    """Ordered waypoints with pass tolerances and the state the flight starts from.

    node_density is the spatial node spacing in meters per node.  For periodic
    tracks the last waypoint should sit at the intended loop-closure position;
    time wrapping itself is handled by the trajectory layer.
    """

    waypoints: np.ndarray
    tolerances: np.ndarray
    start_state: State
    periodic: bool = False
    node_density: float = 0.3

    def __post_init__(self):
        self.waypoints = np.atleast_2d(np.asarray(self.waypoints, dtype=float))
        self.tolerances = np.atleast_1d(np.asarray(self.tolerances, dtype=float))
        if self.waypoints.shape[0] < 1 or self.waypoints.shape[1] != 3:
            raise ValueError("need at least one 3D waypoint")
        if self.tolerances.shape != (self.waypoints.shape[0],):
            raise ValueError("one tolerance per waypoint required")
        if np.any(self.tolerances < 0):
            raise ValueError("tolerances must be non-negative")
        if not self.node_density > 0:
            raise ValueError("node_density must be positive")
        if np.any(self.segment_lengths() <= 0):
            raise ValueError("consecutive waypoints must not be coincident")

    @property
    def n_waypoints(self) -> int:
        return self.waypoints.shape[0]

    def segment_lengths(self) -> np.ndarray:
        """Straight-line segment lengths, the first measured from the start state."""
        pts = np.vstack([self.start_state.p, self.waypoints])
        return np.linalg.norm(np.diff(pts, axis=0), axis=1)


@dataclass
class Allocation:
    """Per-segment node counts and the waypoint node indices they imply."""

    segment_counts: np.ndarray
    cumulative_indices: np.ndarray
    total_nodes: int

    def __post_init__(self):
        self.segment_counts = np.asarray(self.segment_counts, dtype=int)
        self.cumulative_indices = np.asarray(self.cumulative_indices, dtype=int)
        if np.any(self.segment_counts < 2):
            raise ValueError("each segment needs at least 2 nodes")
        if np.any(np.diff(self.cumulative_indices) <= 0) or self.cumulative_indices[0] <= 0:
            raise ValueError("cumulative indices must be strictly increasing")
        if self.cumulative_indices[-1] != self.total_nodes != self.segment_counts.sum():
            raise ValueError("totals inconsistent")

    @property
    def n_segments(self) -> int:
        return len(self.segment_counts)

    def segment_of_step(self) -> np.ndarray:
        """Segment index owning each shooting step k = 0..N-1."""
        return np.repeat(np.arange(self.n_segments), self.segment_counts)


def allocate_nodes(track: Track) -> Allocation:
    """floor(distance / density) nodes per segment, clamped to at least 2."""
    counts = np.floor(track.segment_lengths() / track.node_density).astype(int)
    counts = np.maximum(counts, 2)
    cum = np.cumsum(counts)
    return Allocation(counts, cum, int(cum[-1]))


def _default_warmup_options():
    return SolverOptions(
        tol_stationarity=1e-3,
        tol_feasibility=1e-6,
        max_outer_iters=3,
        max_inner_iters=6000,
    )


def _default_main_options():
    return SolverOptions(
        tol_stationarity=2e-2,
        tol_feasibility=1e-7,
        max_outer_iters=24,
        max_inner_iters=4000,
        penalty_growth=5.0,
        penalty_max=1e9,
        feasibility_contraction=0.5,
    )


@dataclass
class PlannerConfig:
    warmup_dt0: Optional[float] = None
    dt_min: float = 1e-3
    dt_max: float = 0.2
    pos_bound: float = 100.0
    vel_bound: float = 25.0
    omega_bound: float = 10.0
    quat_bound: float = 1.05
    quaternion_penalty_weight: float = 1e3
    control_reg_weight: float = 1e-4
    guess_speed: float = 5.0
    warmup_options: SolverOptions = field(default_factory=_default_warmup_options)
    main_options: SolverOptions = field(default_factory=_default_main_options)

    def __post_init__(self):
        if not (0 < self.dt_min < self.dt_max):
            raise ValueError("need 0 < dt_min < dt_max")
        if self.omega_bound <= 0:
            raise ValueError("omega_bound must be positive")

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
class PlanResult:
    """Solved nodes, per-segment sampling times, and audit results."""

    node_states: np.ndarray  # (N+1, 13)
    node_inputs: np.ndarray  # (N, 4)
    segment_dts: np.ndarray
    allocation: Allocation
    total_time: float
    waypoint_errors: np.ndarray
    solve_report: dict
    defect_inf: float
    track: Track
    params: QuadrotorParams
    # converged dual information, reused to warm-start replans
    eq_multipliers: Optional[np.ndarray] = None
    ineq_multipliers: Optional[np.ndarray] = None
    final_penalty: float = 0.0

    def node_state(self, k: int) -> State:
        return State.from_array(self.node_states[k])

    def node_input(self, k: int) -> ControlInput:
        return ControlInput(self.node_inputs[k])

    def step_dts(self) -> np.ndarray:
        """Sampling time of every shooting step (length N)."""
        return self.segment_dts[self.allocation.segment_of_step()]

    def knot_times(self) -> np.ndarray:
        """Cumulative node times t_0=0 .. t_N = total_time."""
        return np.concatenate([[0.0], np.cumsum(self.step_dts())])


class _Layout:
    """Column layout of the decision vector [states | inputs | segment dts]."""

    def __init__(self, n_steps: int, n_segments: int, free_dt: bool):
        self.n = n_steps
        self.n_seg = n_segments
        self.free_dt = free_dt
        self.x0 = 0
        self.u0 = STATE_DIM * (n_steps + 1)
        self.dt0 = self.u0 + INPUT_DIM * n_steps
        self.dim = self.dt0 + (n_segments if free_dt else 0)

    def states(self, z):
        return z[: self.u0].reshape(self.n + 1, STATE_DIM)

    def inputs(self, z):
        return z[self.u0 : self.dt0].reshape(self.n, INPUT_DIM)

    def dts(self, z):
        return z[self.dt0 :]

    def pack(self, X, U, dts=None):
        parts = [np.asarray(X, dtype=float).ravel(), np.asarray(U, dtype=float).ravel()]
        if self.free_dt:
            parts.append(np.asarray(dts, dtype=float).ravel())
        return np.concatenate(parts)


def _interp_initial_guess(track: Track, alloc: Allocation, dt0: float, params: QuadrotorParams):
    """Piecewise-linear positions along the polyline, hover attitude and thrust."""
    n = alloc.total_nodes
    pts = np.vstack([track.start_state.p, track.waypoints])
    X = np.zeros((n + 1, STATE_DIM))
    X[:, 6] = 1.0
    node = 0
    for i, count in enumerate(alloc.segment_counts):
        frac = np.arange(count) / count
        X[node : node + count, :3] = pts[i] + frac[:, None] * (pts[i + 1] - pts[i])
        node += count
    X[n, :3] = pts[-1]
    # centered-difference velocity estimates on the interpolated positions
    X[1:-1, 3:6] = (X[2:, :3] - X[:-2, :3]) / (2.0 * dt0)
    X[0] = track.start_state.as_array()
    U = np.full((n, INPUT_DIM), params.hover_thrust)
    return X, U


def _box_bounds(layout: _Layout, track: Track, params: QuadrotorParams, config: PlannerConfig, pin_x0: bool):
    slb, sub = config.state_box()
    lb = np.empty(layout.dim)
    ub = np.empty(layout.dim)
    lb[: layout.u0] = np.tile(slb, layout.n + 1)
    ub[: layout.u0] = np.tile(sub, layout.n + 1)
    lb[layout.u0 : layout.dt0] = params.thrust_min
    ub[layout.u0 : layout.dt0] = params.thrust_max
    if layout.free_dt:
        lb[layout.dt0 :] = config.dt_min
        ub[layout.dt0 :] = config.dt_max
    if pin_x0:
        x_init = track.start_state.as_array()
        lb[:STATE_DIM] = x_init
        ub[:STATE_DIM] = x_init
    return lb, ub


def _quat_penalty_terms(X, weight):
    q = X[:, QUAT]
    r = np.einsum("ki,ki->k", q, q) - 1.0
    value = weight * float(np.sum(r * r))
    grad_q = (4.0 * weight) * r[:, None] * q
    return value, grad_q


def build_warmup(
    track: Track, params: QuadrotorParams, allocation: Allocation, config: PlannerConfig
) -> NlpProblem:
    """Penalty warm-up: waypoint + defect + control-effort penalties, boxes only."""
    n = allocation.total_nodes
    layout = _Layout(n, allocation.n_segments, free_dt=False)
    dt0 = _warmup_dt0(track, allocation, config)
    m_idx = allocation.cumulative_indices
    wps = track.waypoints
    w_q = config.quaternion_penalty_weight
    r_u = config.control_reg_weight

    def objective(z):
        X = layout.states(z)
        U = layout.inputs(z)
        pred, A, B, _ = dyn.rk4_step_with_jacobians_arrays(
            X[:-1], U, np.full(n, dt0), params, renormalize=True
        )
        H = X[1:] - pred
        dw = X[m_idx, :3] - wps
        value = float(np.sum(H * H)) + float(np.sum(dw * dw)) + r_u * float(np.sum(U * U))
        qv, qg = _quat_penalty_terms(X, w_q)
        value += qv

        gX = np.zeros_like(X)
        gX[1:] += 2.0 * H
        gX[:-1] -= 2.0 * np.einsum("kij,ki->kj", A, H)
        gX[m_idx, :3] += 2.0 * dw
        gX[:, QUAT] += qg
        gU = 2.0 * r_u * U - 2.0 * np.einsum("kij,ki->kj", B, H)
        return value, layout.pack(gX, gU)

    lb, ub = _box_bounds(layout, track, params, config, pin_x0=True)
    return NlpProblem(dim=layout.dim, objective=objective, lower_bounds=lb, upper_bounds=ub)


def _warmup_dt0(track: Track, allocation: Allocation, config: PlannerConfig) -> float:
    if config.warmup_dt0 is not None:
        return float(np.clip(config.warmup_dt0, config.dt_min, config.dt_max))
    total_len = float(np.sum(track.segment_lengths()))
    dt0 = total_len / config.guess_speed / allocation.total_nodes
    return float(np.clip(dt0, config.dt_min, config.dt_max))


class _DefectJacobianPattern:
    """Precomputed sparsity pattern of the shooting equality Jacobian."""

    def __init__(self, layout: _Layout, seg_of_step: np.ndarray):
        n = layout.n
        s = STATE_DIM
        self.n_rows = s + s * n
        rows, cols = [], []
        # initial-state pin rows
        rows.append(np.arange(s))
        cols.append(np.arange(s))
        base = s + s * np.arange(n)[:, None]  # (n,1)
        # identity on x_{k+1}
        rows.append((base + np.arange(s)).ravel())
        cols.append((s * (np.arange(n)[:, None] + 1) + np.arange(s)).ravel())
        # -A_k on x_k
        rows.append((base[:, :, None] + np.repeat(np.arange(s), s)[None]).ravel())
        cols.append((s * np.arange(n)[:, None] + np.tile(np.arange(s), s)[None]).ravel())
        # -B_k on u_k
        rows.append((base[:, :, None] + np.repeat(np.arange(s), INPUT_DIM)[None]).ravel())
        cols.append(
            (layout.u0 + INPUT_DIM * np.arange(n)[:, None] + np.tile(np.arange(INPUT_DIM), s)[None]).ravel()
        )
        # -g_k on the owning segment dt
        if layout.free_dt:
            rows.append((base + np.arange(s)).ravel())
            cols.append(np.repeat(layout.dt0 + seg_of_step, s))
        self.rows = np.concatenate(rows)
        self.cols = np.concatenate(cols)
        self.shape = (self.n_rows, layout.dim)
        # freeze the csr structure once; assemble only permutes fresh data in
        template = sp.coo_matrix(
            (np.arange(len(self.rows), dtype=float), (self.rows, self.cols)), shape=self.shape
        ).tocsr()
        self.perm = template.data.astype(np.intp)
        self.indices = template.indices
        self.indptr = template.indptr

    def assemble(self, A, B, g=None):
        n = A.shape[0]
        parts = [np.ones(STATE_DIM), np.ones(STATE_DIM * n), (-A).reshape(-1), (-B).reshape(-1)]
        if g is not None:
            parts.append((-g).reshape(-1))
        data = np.concatenate(parts)
        return sp.csr_matrix((data[self.perm], self.indices, self.indptr), shape=self.shape)


def build_time_optimal(
    track: Track, params: QuadrotorParams, allocation: Allocation, config: PlannerConfig
) -> NlpProblem:
    """Free-time problem: minimize sum_i N_i dt_i under shooting equalities,
    waypoint-ball inequalities, and state/input/dt boxes."""
    n = allocation.total_nodes
    layout = _Layout(n, allocation.n_segments, free_dt=True)
    seg_of_step = allocation.segment_of_step()
    pattern = _DefectJacobianPattern(layout, seg_of_step)
    counts = allocation.segment_counts.astype(float)
    m_idx = allocation.cumulative_indices
    wps = track.waypoints
    tol_sq = track.tolerances**2
    x_init = track.start_state.as_array()
    w_q = config.quaternion_penalty_weight

    def objective(z):
        X = layout.states(z)
        value = float(counts @ layout.dts(z))
        qv, qg = _quat_penalty_terms(X, w_q)
        gX = np.zeros_like(X)
        gX[:, QUAT] = qg
        grad = layout.pack(gX, np.zeros((n, INPUT_DIM)), counts)
        return value + qv, grad

    def eq(z):
        X = layout.states(z)
        U = layout.inputs(z)
        dts = layout.dts(z)[seg_of_step]
        pred, A, B, g = dyn.rk4_step_with_jacobians_arrays(X[:-1], U, dts, params, renormalize=True)
        h = np.concatenate([X[0] - x_init, (X[1:] - pred).ravel()])
        return h, pattern.assemble(A, B, g)

    def ineq(z):
        X = layout.states(z)
        dp = X[m_idx, :3] - wps
        r = np.einsum("ki,ki->k", dp, dp) - tol_sq
        J = np.zeros((len(m_idx), layout.dim))
        for i, node in enumerate(m_idx):
            J[i, STATE_DIM * node : STATE_DIM * node + 3] = 2.0 * dp[i]
        return r, J

    lb, ub = _box_bounds(layout, track, params, config, pin_x0=False)
    return NlpProblem(
        dim=layout.dim,
        objective=objective,
        eq_constraints=eq,
        ineq_constraints=ineq,
        lower_bounds=lb,
        upper_bounds=ub,
    )


def _solution_summary(sol: NlpSolution) -> dict:
    return {
        "status": sol.status,
        "iterations": sol.iterations,
        "wall_time": sol.wall_time,
        "n_evals": sol.n_evals,
        "objective_value": sol.objective_value,
        "eq_violation_inf": sol.eq_violation_inf,
        "ineq_violation_inf": sol.ineq_violation_inf,
        "stationarity_inf": sol.stationarity_inf,
    }


def _extract_plan(
    sol: NlpSolution, track, params, config, allocation, report, audit_tol=1e-6
) -> PlanResult:
    layout = _Layout(allocation.total_nodes, allocation.n_segments, free_dt=True)
    z = sol.z_star
    X = layout.states(z).copy()
    U = layout.inputs(z).copy()
    dts = layout.dts(z).copy()
    X[:, QUAT] /= np.linalg.norm(X[:, QUAT], axis=1, keepdims=True)

    step_dts = dts[allocation.segment_of_step()]
    pred = dyn.rk4_step_arrays(X[:-1], U, step_dts, params, renormalize=True)
    defect = float(np.max(np.abs(X[1:] - pred)))
    if defect > audit_tol:
        raise PlannerError("main", f"dynamics defect audit failed: {defect:.3e} > {audit_tol:.0e}")

    wp_err = np.linalg.norm(X[allocation.cumulative_indices, :3] - track.waypoints, axis=1)
    if np.any(wp_err > track.tolerances + audit_tol):
        raise PlannerError("main", f"waypoint error exceeds tolerance: {wp_err}")

    total_time = float(allocation.segment_counts @ dts)
    return PlanResult(
        node_states=X,
        node_inputs=U,
        segment_dts=dts,
        allocation=allocation,
        total_time=total_time,
        waypoint_errors=wp_err,
        solve_report=report,
        defect_inf=defect,
        track=track,
        params=params,
        eq_multipliers=sol.eq_multipliers,
        ineq_multipliers=sol.ineq_multipliers,
        final_penalty=sol.final_penalty,
    )


def plan(
    track: Track,
    params: QuadrotorParams,
    config: PlannerConfig = None,
    init_jitter: float = 0.0,
    rng=None,
) -> PlanResult:
    """Warm-up then time-optimal solve over the track.

    init_jitter adds seeded position noise to the interpolated initial guess,
    used by the density sweep to probe solution stability across starts.
    """
    if config is None:
        config = PlannerConfig()
    allocation = allocate_nodes(track)
    dt0 = _warmup_dt0(track, allocation, config)

    wX, wU = _interp_initial_guess(track, allocation, dt0, params)
    if init_jitter > 0.0:
        if rng is None:
            rng = np.random.default_rng(0)
        wX[1:, :3] += rng.normal(scale=init_jitter, size=(allocation.total_nodes, 3))
    warm_layout = _Layout(allocation.total_nodes, allocation.n_segments, free_dt=False)
    warm_problem = build_warmup(track, params, allocation, config)
    t_w = time.perf_counter()
    warm_sol = solve(warm_problem, warm_layout.pack(wX, wU), config.warmup_options)
    if warm_sol.status in ("diverged", "budget_exceeded"):
        raise PlannerError("warmup", f"warm-up solve failed with status {warm_sol.status}", warm_sol)
    report = {"warmup": _solution_summary(warm_sol), "warmup_dt0": dt0}
    report["warmup"]["wall_time"] = time.perf_counter() - t_w

    main_layout = _Layout(allocation.total_nodes, allocation.n_segments, free_dt=True)
    z0 = np.concatenate([warm_sol.z_star, np.full(allocation.n_segments, dt0)])
    main_problem = build_time_optimal(track, params, allocation, config)
    t_m = time.perf_counter()
    main_sol = solve(main_problem, z0, config.main_options)
    if main_sol.status != CONVERGED:
        raise PlannerError("main", f"time-optimal solve failed with status {main_sol.status}", main_sol)
    report["main"] = _solution_summary(main_sol)
    report["main"]["wall_time"] = time.perf_counter() - t_m

    assert main_layout.dim == main_problem.dim
    return _extract_plan(main_sol, track, params, config, allocation, report)


def replan(
    new_track: Track, previous: PlanResult, params: QuadrotorParams, config: PlannerConfig = None
) -> PlanResult:
    """Re-solve the free-time problem for a moved-waypoint track, warm-started
    from the previous plan; the warm-up phase is skipped and the previous
    node allocation is kept so the decision vectors line up."""
    if config is None:
        config = PlannerConfig()
    if new_track.n_waypoints != previous.track.n_waypoints:
        raise PlannerError("replan", "waypoint count changed; a full plan is required")
    if new_track.periodic != previous.track.periodic:
        raise PlannerError("replan", "periodicity changed; a full plan is required")

    allocation = previous.allocation
    layout = _Layout(allocation.total_nodes, allocation.n_segments, free_dt=True)
    z0 = layout.pack(previous.node_states, previous.node_inputs, previous.segment_dts)
    problem = build_time_optimal(new_track, params, allocation, config)
    warm = {
        "eq_multipliers": previous.eq_multipliers,
        "ineq_multipliers": previous.ineq_multipliers,
        "penalty": previous.final_penalty,
    }
    t_m = time.perf_counter()
    sol = solve(problem, z0, config.main_options, warm_start=warm)
    if sol.status != CONVERGED:
        raise PlannerError("main", f"replan solve failed with status {sol.status}", sol)
    report = {"main": _solution_summary(sol), "replanned": True}
    report["main"]["wall_time"] = time.perf_counter() - t_m
    return _extract_plan(sol, new_track, params, config, allocation, report)


# ---------------------------------------------------------------------------
# plan document serialization
# ---------------------------------------------------------------------------


def plan_to_dict(plan_result: PlanResult) -> dict:
    track = plan_result.track
    params = plan_result.params
    return {
        "schema_version": 1,
        "params": {
            "mass": params.mass,
            "arm_length": params.arm_length,
            "inertia_diag": params.inertia_diag.tolist(),
            "drag_diag": params.drag_diag.tolist(),
            "thrust_min": params.thrust_min,
            "thrust_max": params.thrust_max,
            "torque_coeff": params.torque_coeff,
            "gravity": params.gravity,
        },
        "track": {
            "waypoints": track.waypoints.tolist(),
            "tolerances": track.tolerances.tolist(),
            "start_state": track.start_state.as_array().tolist(),
            "periodic": track.periodic,
            "node_density": track.node_density,
        },
        "allocation": {
            "segment_counts": plan_result.allocation.segment_counts.tolist(),
            "cumulative_indices": plan_result.allocation.cumulative_indices.tolist(),
            "total_nodes": plan_result.allocation.total_nodes,
        },
        "node_states": plan_result.node_states.tolist(),
        "node_inputs": plan_result.node_inputs.tolist(),
        "segment_dts": plan_result.segment_dts.tolist(),
        "total_time": plan_result.total_time,
        "waypoint_errors": plan_result.waypoint_errors.tolist(),
        "defect_inf": plan_result.defect_inf,
        "solve_report": plan_result.solve_report,
        "eq_multipliers": None
        if plan_result.eq_multipliers is None
        else plan_result.eq_multipliers.tolist(),
        "ineq_multipliers": None
        if plan_result.ineq_multipliers is None
        else plan_result.ineq_multipliers.tolist(),
        "final_penalty": plan_result.final_penalty,
    }


def plan_from_dict(doc: dict) -> PlanResult:
    if doc.get("schema_version") != 1:
        raise ValueError("unsupported plan schema version")
    p = doc["params"]
    params = QuadrotorParams(
        mass=p["mass"],
        arm_length=p["arm_length"],
        inertia_diag=np.array(p["inertia_diag"]),
        drag_diag=np.array(p["drag_diag"]),
        thrust_min=p["thrust_min"],
        thrust_max=p["thrust_max"],
        torque_coeff=p["torque_coeff"],
        gravity=p["gravity"],
    )
    t = doc["track"]
    track = Track(
        waypoints=np.array(t["waypoints"]),
        tolerances=np.array(t["tolerances"]),
        start_state=State.from_array(np.array(t["start_state"])),
        periodic=t["periodic"],
        node_density=t["node_density"],
    )
    a = doc["allocation"]
    allocation = Allocation(
        np.array(a["segment_counts"]), np.array(a["cumulative_indices"]), a["total_nodes"]
    )
    lam = doc.get("eq_multipliers")
    mu = doc.get("ineq_multipliers")
    return PlanResult(
        node_states=np.array(doc["node_states"]),
        node_inputs=np.array(doc["node_inputs"]),
        segment_dts=np.array(doc["segment_dts"]),
        allocation=allocation,
        total_time=doc["total_time"],
        waypoint_errors=np.array(doc["waypoint_errors"]),
        solve_report=doc["solve_report"],
        defect_inf=doc["defect_inf"],
        track=track,
        params=params,
        eq_multipliers=None if lam is None else np.array(lam),
        ineq_multipliers=None if mu is None else np.array(mu),
        final_penalty=doc.get("final_penalty", 0.0),
    )


def save_plan(plan_result: PlanResult, path) -> None:
    with open(path, "w") as f:
        json.dump(plan_to_dict(plan_result), f, indent=1)


def load_plan(path) -> PlanResult:
    with open(path) as f:
        return plan_from_dict(json.load(f))
