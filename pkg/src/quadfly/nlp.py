"""Generic constrained nonlinear programming layer.

A problem is a box-constrained NLP with optional equality constraints h(z)=0
and inequality constraints g(z)<=0, each supplied as a callable returning the
residual together with its Jacobian (dense ndarray or scipy.sparse).  The
solver is an augmented Lagrangian outer loop with a projected quasi-Newton
inner minimizer over the box (scipy's L-BFGS-B).

The outer loop keeps a record of accepted iterations: an iterate is accepted,
and the multipliers updated, only when it does not worsen the best constraint
violation seen so far; otherwise the penalty is increased.  This makes the
accepted-feasibility history monotone by construction.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import lsq_linear, minimize

CONVERGED = "converged"
MAX_ITERS = "max_iters"
BUDGET_EXCEEDED = "budget_exceeded"
DIVERGED = "diverged"

_RHO_MAX = 1e12


@dataclass
class NlpProblem:
    """Constrained NLP: min f(z) s.t. h(z)=0, g(z)<=0, lb<=z<=ub.

    objective(z) -> (value, gradient); eq_constraints / ineq_constraints,
    when present, map z -> (residual, jacobian).
    """

    dim: int
    objective: Callable
    eq_constraints: Optional[Callable] = None
    ineq_constraints: Optional[Callable] = None
    lower_bounds: Optional[np.ndarray] = None
    upper_bounds: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.lower_bounds is None:
            self.lower_bounds = np.full(self.dim, -np.inf)
        if self.upper_bounds is None:
            self.upper_bounds = np.full(self.dim, np.inf)
        self.lower_bounds = np.asarray(self.lower_bounds, dtype=float)
        self.upper_bounds = np.asarray(self.upper_bounds, dtype=float)
        if self.lower_bounds.shape != (self.dim,) or self.upper_bounds.shape != (self.dim,):
            raise ValueError("bounds must match problem dimension")
        if np.any(self.lower_bounds > self.upper_bounds):
            raise ValueError("lower bound exceeds upper bound")


@dataclass
class SolverOptions:
    tol_stationarity: float = 1e-4
    tol_feasibility: float = 1e-6
    max_outer_iters: int = 30
    max_inner_iters: int = 200
    initial_penalty: float = 10.0
    penalty_growth: float = 10.0
    penalty_max: float = _RHO_MAX
    feasibility_contraction: float = 0.25  # required per-outer violation shrink
    time_budget: float = np.inf

    def __post_init__(self):
        if self.tol_stationarity <= 0 or self.tol_feasibility <= 0:
            raise ValueError("tolerances must be positive")
        if self.penalty_growth <= 1:
            raise ValueError("penalty_growth must exceed 1")


@dataclass
class NlpSolution:
    z_star: np.ndarray
    objective_value: float
    eq_violation_inf: float
    ineq_violation_inf: float
    stationarity_inf: float
    iterations: int
    wall_time: float
    status: str
    n_evals: int = 0
    eq_multipliers: Optional[np.ndarray] = None
    ineq_multipliers: Optional[np.ndarray] = None
    final_penalty: float = 0.0
    history: list = field(default_factory=list)

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED


def _jac_t_vec(J, w):
    if sp.issparse(J):
        return np.asarray(J.T @ w).ravel()
    return J.T @ w


def _eval_eq(problem, z):
    if problem.eq_constraints is None:
        return np.zeros(0), None
    return problem.eq_constraints(z)


def _eval_ineq(problem, z):
    if problem.ineq_constraints is None:
        return np.zeros(0), None
    return problem.ineq_constraints(z)


def _violations(h, g):
    eq_v = float(np.max(np.abs(h))) if h.size else 0.0
    in_v = float(np.max(np.maximum(g, 0.0))) if g.size else 0.0
    return eq_v, in_v


def _projected_gradient_norm(z, grad, lb, ub):
    step = np.clip(z - grad, lb, ub) - z
    return float(np.max(np.abs(step))) if step.size else 0.0


def solve(
    problem: NlpProblem,
    init: np.ndarray,
    opts: SolverOptions = None,
    warm_start: Optional[dict] = None,
) -> NlpSolution:
    """Augmented Lagrangian solve of the problem from the given initial point.

    warm_start may carry "eq_multipliers", "ineq_multipliers", and "penalty"
    from a previous solve of a nearby problem (receding-horizon reuse).
    """
    if opts is None:
        opts = SolverOptions()
    t0 = time.perf_counter()
    lb, ub = problem.lower_bounds, problem.upper_bounds
    z = np.clip(np.asarray(init, dtype=float), lb, ub)

    evals = {"n": 0}

    f0, g0 = problem.objective(z)
    evals["n"] += 1
    if not np.isfinite(f0):
        return _finalize(problem, z, t0, 0, DIVERGED, evals["n"], None, None, 0.0, [])
    stat_scale = max(1.0, float(np.max(np.abs(g0)))) if np.asarray(g0).size else 1.0
    stat_target = opts.tol_stationarity * stat_scale

    h, _ = _eval_eq(problem, z)
    g, _ = _eval_ineq(problem, z)
    lam = np.zeros(h.size)
    mu = np.zeros(g.size)
    rho = opts.initial_penalty
    if warm_start:
        if warm_start.get("eq_multipliers") is not None and h.size:
            lam = np.asarray(warm_start["eq_multipliers"], dtype=float).copy()
        if warm_start.get("ineq_multipliers") is not None and g.size:
            mu = np.asarray(warm_start["ineq_multipliers"], dtype=float).copy()
        if warm_start.get("penalty"):
            rho = float(warm_start["penalty"])

    best_viol = np.inf
    history = []
    status = MAX_ITERS
    outer_done = 0

    for outer in range(opts.max_outer_iters):
        lam_k, mu_k, rho_k = lam, mu, rho

        def al_value_grad(zz):
            fv, fg = problem.objective(zz)
            evals["n"] += 1
            hv, hJ = _eval_eq(problem, zz)
            gv, gJ = _eval_ineq(problem, zz)
            val = fv
            grad = fg.copy()
            if hv.size:
                val += lam_k @ hv + 0.5 * rho_k * (hv @ hv)
                grad += _jac_t_vec(hJ, lam_k + rho_k * hv)
            if gv.size:
                act = np.maximum(0.0, mu_k + rho_k * gv)
                val += (act @ act - mu_k @ mu_k) / (2.0 * rho_k)
                grad += _jac_t_vec(gJ, act)
            if not np.isfinite(val):
                # steer the line search away instead of crashing
                return 1e50, np.zeros_like(grad)
            return val, grad

        inner_gtol = max(0.1 * stat_target, 1e-10)
        res = minimize(
            al_value_grad,
            z,
            jac=True,
            method="L-BFGS-B",
            bounds=list(zip(lb, ub)),
            options={
                "maxiter": opts.max_inner_iters,
                "maxls": 60,
                "maxcor": 25,
                "ftol": 1e-12,
                "gtol": inner_gtol,
            },
        )
        z = np.clip(res.x, lb, ub)
        outer_done = outer + 1

        fv, fg = problem.objective(z)
        evals["n"] += 1
        h, hJ = _eval_eq(problem, z)
        g, gJ = _eval_ineq(problem, z)
        if not (np.isfinite(fv) and np.all(np.isfinite(h)) and np.all(np.isfinite(g))):
            status = DIVERGED
            break

        eq_v, in_v = _violations(h, g)
        viol = max(eq_v, in_v)

        lam_new = lam + rho * h if h.size else lam
        mu_new = np.maximum(0.0, mu + rho * g) if g.size else mu
        grad_L = fg.copy()
        if h.size:
            grad_L += _jac_t_vec(hJ, lam_new)
        if g.size:
            grad_L += _jac_t_vec(gJ, mu_new)
        stat = _projected_gradient_norm(z, grad_L, lb, ub)

        accepted = viol <= best_viol + 1e-12
        near_best = viol <= 3.0 * best_viol
        rho_cap = min(opts.penalty_max, _RHO_MAX)
        if accepted:
            improved = viol <= opts.feasibility_contraction * best_viol
            best_viol = min(best_viol, viol)
            lam, mu = lam_new, mu_new
            # grow the penalty only while genuinely infeasible; past the
            # feasibility tolerance extra penalty just ruins conditioning
            if not improved and viol > opts.tol_feasibility:
                rho = min(rho * opts.penalty_growth, rho_cap)
        elif near_best:
            # inner-solve wobble around the best point: keep the multiplier
            # iteration moving, it is what contracts the violation
            lam, mu = lam_new, mu_new
        elif viol > opts.tol_feasibility:
            rho = min(rho * opts.penalty_growth, rho_cap)

        history.append(
            {
                "outer": outer_done,
                "accepted": accepted,
                "violation": viol,
                "stationarity": stat,
                "penalty": rho_k,
                "objective": fv,
            }
        )

        if viol <= opts.tol_feasibility and stat <= stat_target:
            status = CONVERGED
            break
        if time.perf_counter() - t0 > opts.time_budget:
            status = BUDGET_EXCEEDED
            break

    return _finalize(problem, z, t0, outer_done, status, evals["n"], lam, mu, rho, history)


def _finalize(problem, z, t0, iters, status, n_evals, lam, mu, rho, history):
    fv, _ = problem.objective(z)
    h, _ = _eval_eq(problem, z)
    g, _ = _eval_ineq(problem, z)
    eq_v, in_v = _violations(h, g)
    res = kkt_residuals(problem, z, eq_multipliers=lam, ineq_multipliers=mu)
    return NlpSolution(
        z_star=z,
        objective_value=float(fv),
        eq_violation_inf=eq_v,
        ineq_violation_inf=in_v,
        stationarity_inf=res["stationarity_inf"],
        iterations=iters,
        wall_time=time.perf_counter() - t0,
        status=status,
        n_evals=n_evals,
        eq_multipliers=lam,
        ineq_multipliers=mu,
        final_penalty=rho,
        history=history,
    )


def kkt_residuals(problem: NlpProblem, z: np.ndarray, eq_multipliers=None, ineq_multipliers=None):
    """Projected-gradient stationarity and raw constraint violations at z.

    Multipliers are estimated by bounded least squares on the free coordinates
    when not supplied.
    """
    z = np.asarray(z, dtype=float)
    lb, ub = problem.lower_bounds, problem.upper_bounds
    _, fg = problem.objective(z)
    h, hJ = _eval_eq(problem, z)
    g, gJ = _eval_ineq(problem, z)
    eq_v, in_v = _violations(h, g)

    need_estimate = (eq_multipliers is None and h.size) or (ineq_multipliers is None and g.size)
    if need_estimate:
        eq_multipliers, ineq_multipliers = _estimate_multipliers(z, fg, h, hJ, g, gJ, lb, ub)
    lam = np.zeros(h.size) if eq_multipliers is None else np.asarray(eq_multipliers, dtype=float)
    mu = np.zeros(g.size) if ineq_multipliers is None else np.asarray(ineq_multipliers, dtype=float)

    grad_L = fg.copy()
    if h.size:
        grad_L += _jac_t_vec(hJ, lam)
    if g.size:
        grad_L += _jac_t_vec(gJ, mu)
    return {
        "stationarity_inf": _projected_gradient_norm(z, grad_L, lb, ub),
        "eq_violation_inf": eq_v,
        "ineq_violation_inf": in_v,
    }


def _estimate_multipliers(z, fg, h, hJ, g, gJ, lb, ub, active_tol=1e-6):
    free = (z > lb + 1e-9) & (z < ub - 1e-9)
    cols = []
    n_eq = h.size
    if n_eq:
        Jh = hJ.toarray() if sp.issparse(hJ) else np.asarray(hJ)
        cols.append(Jh.T)
    active = np.zeros(0, dtype=bool)
    if g.size:
        active = g >= -active_tol
        if np.any(active):
            Jg = gJ.toarray() if sp.issparse(gJ) else np.asarray(gJ)
            cols.append(Jg[active].T)
    if not cols:
        return np.zeros(0), np.zeros(0)
    A = np.hstack(cols)[free]
    b = -fg[free]
    n_act = int(np.sum(active))
    lo = np.concatenate([np.full(n_eq, -np.inf), np.zeros(n_act)])
    hi = np.full(n_eq + n_act, np.inf)
    if A.size == 0:
        sol_x = np.zeros(n_eq + n_act)
    else:
        sol_x = lsq_linear(A, b, bounds=(lo, hi)).x
    lam = sol_x[:n_eq]
    mu = np.zeros(g.size)
    if n_act:
        mu[active] = sol_x[n_eq:]
    return lam, mu


def finite_diff_audit(problem: NlpProblem, z: np.ndarray, step: float = 1e-6) -> float:
    """Worst mixed absolute/relative error of the supplied derivatives vs
    central finite differences at z."""
    z = np.asarray(z, dtype=float)
    worst = 0.0

    def rel(a, b):
        denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
        return float(np.max(np.abs(a - b) / denom)) if np.asarray(a).size else 0.0

    _, fg = problem.objective(z)
    fd = np.empty_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = step
        fp, _ = problem.objective(z + e)
        fm, _ = problem.objective(z - e)
        fd[i] = (fp - fm) / (2 * step)
    worst = max(worst, rel(fg, fd))

    for fun in (problem.eq_constraints, problem.ineq_constraints):
        if fun is None:
            continue
        r0, J = fun(z)
        if sp.issparse(J):
            J = J.toarray()
        Jfd = np.empty((r0.size, z.size))
        for i in range(z.size):
            e = np.zeros_like(z)
            e[i] = step
            rp, _ = fun(z + e)
            rm, _ = fun(z - e)
            Jfd[:, i] = (rp - rm) / (2 * step)
        worst = max(worst, rel(np.asarray(J), Jfd))
    return worst
