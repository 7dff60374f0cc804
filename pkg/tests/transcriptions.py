"""Small free-time transcriptions used as solver oracles in the tests."""

import numpy as np

from quadfly.nlp import NlpProblem


def build_free_time_double_integrator(distance, a_max=1.0, n_steps=40, dt_init=0.05):
    """Rest-to-rest 1D double integrator with one shared free step length.

    Decision vector: [p_0..p_N, v_0..v_N, a_0..a_{N-1}, dt].  Dynamics use the
    exact zero-order-hold map, so the discrete optimum matches the analytic
    bang-bang time T = 2*sqrt(d/a_max) when n_steps is even.
    Returns (problem, init).
    """
    n = n_steps
    dim = 2 * (n + 1) + n + 1
    ip = slice(0, n + 1)
    iv = slice(n + 1, 2 * (n + 1))
    ia = slice(2 * (n + 1), 2 * (n + 1) + n)
    idt = dim - 1

    def objective(z):
        grad = np.zeros(dim)
        grad[idt] = n
        return n * z[idt], grad

    def eq(z):
        p = z[ip]
        v = z[iv]
        a = z[ia]
        dt = z[idt]
        hp = p[1:] - p[:-1] - v[:-1] * dt - 0.5 * a * dt * dt
        hv = v[1:] - v[:-1] - a * dt
        h = np.concatenate([hp, hv])
        J = np.zeros((2 * n, dim))
        rows = np.arange(n)
        J[rows, 1 + rows] = 1.0
        J[rows, rows] = -1.0
        J[rows, n + 1 + rows] = -dt
        J[rows, 2 * (n + 1) + rows] = -0.5 * dt * dt
        J[rows, idt] = -v[:-1] - a * dt
        J[n + rows, n + 2 + rows] = 1.0
        J[n + rows, n + 1 + rows] = -1.0
        J[n + rows, 2 * (n + 1) + rows] = -dt
        J[n + rows, idt] = -a
        return h, J

    lb = np.full(dim, -np.inf)
    ub = np.full(dim, np.inf)
    lb[ip], ub[ip] = -1.0, distance + 1.0
    lb[iv], ub[iv] = -10.0, 10.0
    lb[ia], ub[ia] = -a_max, a_max
    lb[idt], ub[idt] = 1e-4, 0.5
    # rest-to-rest boundary conditions pinned through the box
    lb[0] = ub[0] = 0.0
    lb[n] = ub[n] = distance
    lb[n + 1] = ub[n + 1] = 0.0
    lb[2 * n + 1] = ub[2 * n + 1] = 0.0

    t_guess = n * dt_init
    init = np.zeros(dim)
    init[ip] = np.linspace(0.0, distance, n + 1)
    init[iv] = distance / t_guess
    init[n + 1] = 0.0
    init[2 * n + 1] = 0.0
    init[idt] = dt_init

    problem = NlpProblem(
        dim=dim,
        objective=objective,
        eq_constraints=eq,
        lower_bounds=lb,
        upper_bounds=ub,
    )
    return problem, init
