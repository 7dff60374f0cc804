"""Quadrotor rigid-body dynamics, rotor thrust mixing, and RK4 integration.

State layout is a flat 13-vector: position (world frame, z pointing down,
gravity along +z), velocity (world frame), attitude quaternion (w, x, y, z),
and body rates.  The continuous model is

    p' = v
    v' = g e_z - c R e_z - R D R^T v
    q' = 1/2 q (x) (0, w)
    w' = J^-1 (tau - w x J w)

with mass-normalized collective thrust c, body torque tau from the four rotor
thrusts, diagonal mass-normalized drag D, and diagonal inertia J.

Everything here is a pure function of its arguments.  The `*_arrays` variants
accept batched inputs (leading axes broadcast) and are the hot path for the
shooting transcriptions; the typed wrappers around them are the public API.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GRAVITY = 9.81  # m/s^2

STATE_DIM = 13
INPUT_DIM = 4

# slices into the flat state vector
POS = slice(0, 3)
VEL = slice(3, 6)
QUAT = slice(6, 10)
OMEGA = slice(10, 13)


class DivergenceError(RuntimeError):
    """Integration produced a non-finite state."""


try:  # compiled kernel; the numpy path below is the reference fallback
    import os

    if os.environ.get("QUADFLY_NO_NUMBA"):
        _FAST_KERNEL = None
    else:
        from ._fastdyn import rk4_fused as _FAST_KERNEL
except ImportError:  # pragma: no cover
    _FAST_KERNEL = None


@dataclass(frozen=True)
class QuadrotorParams:
    """Physical constants of the airframe.

    inertia_diag is in kg m^2, drag_diag is the mass-normalized rotor drag
    matrix diagonal in 1/s, torque_coeff maps differential thrust to yaw
    torque.
    """

    mass: float
    arm_length: float
    inertia_diag: np.ndarray
    drag_diag: np.ndarray
    thrust_min: float
    thrust_max: float
    torque_coeff: float
    gravity: float = GRAVITY

    def __post_init__(self):
        object.__setattr__(self, "inertia_diag", np.asarray(self.inertia_diag, dtype=float))
        object.__setattr__(self, "drag_diag", np.asarray(self.drag_diag, dtype=float))
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if self.inertia_diag.shape != (3,) or np.any(self.inertia_diag <= 0):
            raise ValueError("inertia_diag must be 3 positive entries")
        if self.drag_diag.shape != (3,) or np.any(self.drag_diag < 0):
            raise ValueError("drag_diag must be 3 non-negative entries")
        if not (0 <= self.thrust_min < self.thrust_max):
            raise ValueError("need 0 <= thrust_min < thrust_max")
        if not self.gravity > 0:
            raise ValueError("gravity must be positive")

    @classmethod
    def defaults(cls) -> "QuadrotorParams":
        """The 1.2 kg racing-class configuration used throughout the tests."""
        return cls(
            mass=1.2,
            arm_length=0.3,
            inertia_diag=np.array([1.0e-3, 2.0e-3, 3.0e-3]),
            drag_diag=np.array([0.398, 0.316, 0.230]),
            thrust_min=0.0,
            thrust_max=6.9,
            torque_coeff=0.2,
        )

    @property
    def mixing_matrix(self) -> np.ndarray:
        """3x4 matrix mapping rotor thrusts to body torque."""
        a = self.arm_length / np.sqrt(2.0)
        ct = self.torque_coeff
        return np.array(
            [
                [a, -a, -a, a],
                [a, -a, a, -a],
                [-ct, -ct, ct, ct],
            ]
        )

    @property
    def hover_thrust(self) -> float:
        """Per-rotor thrust balancing gravity."""
        return self.mass * self.gravity / 4.0


@dataclass
class State:
    """Rigid-body state: p, v in world frame, unit quaternion, body rates."""

    p: np.ndarray
    v: np.ndarray
    q: np.ndarray
    omega: np.ndarray

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.omega = np.asarray(self.omega, dtype=float)
        if (self.p.shape, self.v.shape, self.q.shape, self.omega.shape) != ((3,), (3,), (4,), (3,)):
            raise ValueError("bad state component shapes")

    @classmethod
    def hover(cls, position) -> "State":
        return cls(np.asarray(position, dtype=float), np.zeros(3), np.array([1.0, 0, 0, 0]), np.zeros(3))

    @classmethod
    def from_array(cls, x: np.ndarray, renormalize: bool = False) -> "State":
        x = np.asarray(x, dtype=float)
        q = x[QUAT]
        if renormalize:
            q = q / np.linalg.norm(q)
        return cls(x[POS].copy(), x[VEL].copy(), q.copy(), x[OMEGA].copy())

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.p, self.v, self.q, self.omega])


@dataclass
class ControlInput:
    """Four rotor thrusts in newtons."""

    thrusts: np.ndarray

    def __post_init__(self):
        self.thrusts = np.asarray(self.thrusts, dtype=float)
        if self.thrusts.shape != (4,):
            raise ValueError("thrusts must have shape (4,)")

    @classmethod
    def hover(cls, params: QuadrotorParams) -> "ControlInput":
        return cls(np.full(4, params.hover_thrust))

    def as_array(self) -> np.ndarray:
        return self.thrusts


@dataclass
class WrenchDecomposition:
    """Mass-normalized collective thrust and body torque."""

    collective_c: float
    torque: np.ndarray


@dataclass
class StateDerivative:
    """Time derivative of a State (q_dot is not a unit quaternion)."""

    p_dot: np.ndarray
    v_dot: np.ndarray
    q_dot: np.ndarray
    omega_dot: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.p_dot, self.v_dot, self.q_dot, self.omega_dot])


# ---------------------------------------------------------------------------
# batched array-level kernels
# ---------------------------------------------------------------------------


def rotation_matrix(q: np.ndarray) -> np.ndarray:
    """Body-to-world rotation matrix from quaternion(s), homogeneous form."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    ww, xx, yy, zz = w * w, x * x, y * y, z * z
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = ww + xx - yy - zz
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = ww - xx + yy - zz
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = ww - xx - yy + zz
    return R


def _rotation_matrix_dq(q: np.ndarray) -> np.ndarray:
    """Derivative of rotation_matrix wrt each quaternion component, (...,4,3,3)."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    D = np.empty(q.shape[:-1] + (4, 3, 3))
    # d/dw
    D[..., 0, 0, 0], D[..., 0, 0, 1], D[..., 0, 0, 2] = 2 * w, -2 * z, 2 * y
    D[..., 0, 1, 0], D[..., 0, 1, 1], D[..., 0, 1, 2] = 2 * z, 2 * w, -2 * x
    D[..., 0, 2, 0], D[..., 0, 2, 1], D[..., 0, 2, 2] = -2 * y, 2 * x, 2 * w
    # d/dx
    D[..., 1, 0, 0], D[..., 1, 0, 1], D[..., 1, 0, 2] = 2 * x, 2 * y, 2 * z
    D[..., 1, 1, 0], D[..., 1, 1, 1], D[..., 1, 1, 2] = 2 * y, -2 * x, -2 * w
    D[..., 1, 2, 0], D[..., 1, 2, 1], D[..., 1, 2, 2] = 2 * z, 2 * w, -2 * x
    # d/dy
    D[..., 2, 0, 0], D[..., 2, 0, 1], D[..., 2, 0, 2] = -2 * y, 2 * x, 2 * w
    D[..., 2, 1, 0], D[..., 2, 1, 1], D[..., 2, 1, 2] = 2 * x, 2 * y, 2 * z
    D[..., 2, 2, 0], D[..., 2, 2, 1], D[..., 2, 2, 2] = -2 * w, 2 * z, -2 * y
    # d/dz
    D[..., 3, 0, 0], D[..., 3, 0, 1], D[..., 3, 0, 2] = -2 * z, -2 * w, 2 * x
    D[..., 3, 1, 0], D[..., 3, 1, 1], D[..., 3, 1, 2] = 2 * w, -2 * z, 2 * y
    D[..., 3, 2, 0], D[..., 3, 2, 1], D[..., 3, 2, 2] = 2 * x, 2 * y, 2 * z
    return D


def mix_arrays(U: np.ndarray, params: QuadrotorParams):
    """Collective thrust (mass-normalized) and torque from rotor thrusts."""
    U = np.asarray(U, dtype=float)
    c = U.sum(axis=-1) / params.mass
    tau = np.einsum("ij,...j->...i", params.mixing_matrix, U)
    return c, tau


def derivative_arrays(X: np.ndarray, U: np.ndarray, params: QuadrotorParams) -> np.ndarray:
    """Continuous state derivative, batched over leading axes."""
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    v = X[..., VEL]
    q = X[..., QUAT]
    w = X[..., OMEGA]
    c, tau = mix_arrays(U, params)
    R = rotation_matrix(q)
    d = params.drag_diag
    J = params.inertia_diag

    out = np.empty_like(X)
    out[..., POS] = v
    # drag: R D R^T v
    v_body = np.einsum("...ji,...j->...i", R, v)
    drag = np.einsum("...ij,...j->...i", R, d * v_body)
    out[..., VEL] = -c[..., None] * R[..., :, 2] - drag
    out[..., VEL.start + 2] += params.gravity
    # quaternion kinematics q' = 1/2 q (x) (0, w)
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    wx, wy, wz = w[..., 0], w[..., 1], w[..., 2]
    out[..., 6] = 0.5 * (-qx * wx - qy * wy - qz * wz)
    out[..., 7] = 0.5 * (qw * wx + qy * wz - qz * wy)
    out[..., 8] = 0.5 * (qw * wy + qz * wx - qx * wz)
    out[..., 9] = 0.5 * (qw * wz + qx * wy - qy * wx)
    # Euler equation with diagonal inertia
    Jw = J * w
    wxJw = np.cross(w, Jw)
    out[..., OMEGA] = (tau - wxJw) / J
    return out


def _skew(a: np.ndarray) -> np.ndarray:
    S = np.zeros(a.shape[:-1] + (3, 3))
    S[..., 0, 1] = -a[..., 2]
    S[..., 0, 2] = a[..., 1]
    S[..., 1, 0] = a[..., 2]
    S[..., 1, 2] = -a[..., 0]
    S[..., 2, 0] = -a[..., 1]
    S[..., 2, 1] = a[..., 0]
    return S


def _stage(X, U, c, tau, params, need_jac):
    """One dynamics evaluation shared by the RK4 stages.

    Returns (k, Jx, Ju); the Jacobians are None when need_jac is False.
    c and tau are precomputed since the input is held over the step.
    """
    batch = X.shape[:-1]
    v = X[..., VEL]
    q = X[..., QUAT]
    w = X[..., OMEGA]
    d = params.drag_diag
    J = params.inertia_diag
    R = rotation_matrix(q)
    zB = R[..., :, 2]
    v_body = np.matmul(R.swapaxes(-1, -2), v[..., None])[..., 0]
    dvb = d * v_body
    drag = np.matmul(R, dvb[..., None])[..., 0]

    k = np.empty(batch + (STATE_DIM,))
    k[..., POS] = v
    k[..., VEL] = -c[..., None] * zB - drag
    k[..., VEL.start + 2] += params.gravity
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    wx, wy, wz = w[..., 0], w[..., 1], w[..., 2]
    k[..., 6] = 0.5 * (-qx * wx - qy * wy - qz * wz)
    k[..., 7] = 0.5 * (qw * wx + qy * wz - qz * wy)
    k[..., 8] = 0.5 * (qw * wy + qz * wx - qx * wz)
    k[..., 9] = 0.5 * (qw * wz + qx * wy - qy * wx)
    Jw = J * w
    k[..., 10] = (tau[..., 0] - (wy * Jw[..., 2] - wz * Jw[..., 1])) / J[0]
    k[..., 11] = (tau[..., 1] - (wz * Jw[..., 0] - wx * Jw[..., 2])) / J[1]
    k[..., 12] = (tau[..., 2] - (wx * Jw[..., 1] - wy * Jw[..., 0])) / J[2]

    if not need_jac:
        return k, None, None

    Jx = np.zeros(batch + (STATE_DIM, STATE_DIM))
    Ju = np.zeros(batch + (STATE_DIM, INPUT_DIM))

    Jx[..., 0, 3] = Jx[..., 1, 4] = Jx[..., 2, 5] = 1.0
    # dv'/dv = -R D R^T
    Jx[..., VEL, VEL] = -np.matmul(R * d, R.swapaxes(-1, -2))

    # dv'/dq columns: -c dR e_z - dR D R^T v - R D dR^T v
    dR = _rotation_matrix_dq(q)  # (...,4,3,3)
    cols = -c[..., None, None] * dR[..., :, :, 2]
    cols -= np.matmul(dR, dvb[..., None, :, None])[..., 0]
    wi = np.matmul(dR.swapaxes(-1, -2), v[..., None, :, None])[..., 0]  # dR_i^T v
    cols -= np.matmul(R[..., None, :, :], (d * wi)[..., :, None])[..., 0]
    Jx[..., VEL, QUAT] = cols.swapaxes(-1, -2)

    # dq'/dq = 1/2 * right-multiplication matrix of (0, w)
    Jx[..., 6, 7] = -0.5 * wx
    Jx[..., 6, 8] = -0.5 * wy
    Jx[..., 6, 9] = -0.5 * wz
    Jx[..., 7, 6] = 0.5 * wx
    Jx[..., 7, 8] = 0.5 * wz
    Jx[..., 7, 9] = -0.5 * wy
    Jx[..., 8, 6] = 0.5 * wy
    Jx[..., 8, 7] = -0.5 * wz
    Jx[..., 8, 9] = 0.5 * wx
    Jx[..., 9, 6] = 0.5 * wz
    Jx[..., 9, 7] = 0.5 * wy
    Jx[..., 9, 8] = -0.5 * wx

    # dq'/dw = 1/2 * left-multiplication matrix of q, vector part columns
    Jx[..., 6, 10] = -0.5 * qx
    Jx[..., 6, 11] = -0.5 * qy
    Jx[..., 6, 12] = -0.5 * qz
    Jx[..., 7, 10] = 0.5 * qw
    Jx[..., 7, 11] = -0.5 * qz
    Jx[..., 7, 12] = 0.5 * qy
    Jx[..., 8, 10] = 0.5 * qz
    Jx[..., 8, 11] = 0.5 * qw
    Jx[..., 8, 12] = -0.5 * qx
    Jx[..., 9, 10] = -0.5 * qy
    Jx[..., 9, 11] = 0.5 * qx
    Jx[..., 9, 12] = 0.5 * qw

    # dw'/dw = J^-1 (skew(Jw) - skew(w) J)
    M = _skew(Jw) - _skew(w) * J[None, :]
    Jx[..., OMEGA, OMEGA] = M / J[:, None]

    Ju[..., VEL, :] = -(zB / params.mass)[..., :, None] * np.ones(INPUT_DIM)
    Ju[..., OMEGA, :] = params.mixing_matrix / J[:, None]
    return k, Jx, Ju


def derivative_jacobians_arrays(X: np.ndarray, U: np.ndarray, params: QuadrotorParams):
    """Jacobians of derivative_arrays wrt state and input, (...,13,13) and (...,13,4)."""
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    c, tau = mix_arrays(U, params)
    _, Jx, Ju = _stage(X, U, c, tau, params, need_jac=True)
    return Jx, Ju


def _rk4_core(X, U, dt, params, renormalize, need_jac):
    """Fused RK4 step and (optionally) its exact derivatives."""
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    dt = np.asarray(dt, dtype=float)
    if _FAST_KERNEL is not None:
        batch = X.shape[:-1]
        Xf = np.ascontiguousarray(X.reshape(-1, STATE_DIM))
        Uf = np.ascontiguousarray(np.broadcast_to(U, batch + (INPUT_DIM,)).reshape(-1, INPUT_DIM))
        dtf = np.ascontiguousarray(np.broadcast_to(dt, batch).reshape(-1))
        out, A, B, g = _FAST_KERNEL(
            Xf,
            Uf,
            dtf,
            params.mass,
            params.gravity,
            params.drag_diag,
            params.inertia_diag,
            params.mixing_matrix,
            need_jac,
            renormalize,
        )
        out = out.reshape(batch + (STATE_DIM,))
        if not need_jac:
            return out, None, None, None
        return (
            out,
            A.reshape(batch + (STATE_DIM, STATE_DIM)),
            B.reshape(batch + (STATE_DIM, INPUT_DIM)),
            g.reshape(batch + (STATE_DIM,)),
        )
    return _rk4_core_numpy(X, U, dt, params, renormalize, need_jac)


def _rk4_core_numpy(X, U, dt, params, renormalize, need_jac):
    dtc = dt[..., None]
    c, tau = mix_arrays(U, params)

    k1, J1x, J1u = _stage(X, U, c, tau, params, need_jac)
    X2 = X + 0.5 * dtc * k1
    k2, J2x, J2u = _stage(X2, U, c, tau, params, need_jac)
    X3 = X + 0.5 * dtc * k2
    k3, J3x, J3u = _stage(X3, U, c, tau, params, need_jac)
    X4 = X + dtc * k3
    k4, J4x, J4u = _stage(X4, U, c, tau, params, need_jac)

    ksum = k1 + 2 * k2 + 2 * k3 + k4
    out = X + (dtc / 6.0) * ksum
    qn = np.linalg.norm(out[..., QUAT], axis=-1, keepdims=True)
    if not need_jac:
        if renormalize:
            out = out.copy()
            out[..., QUAT] /= qn
        return out, None, None, None

    dtm = dt[..., None, None]
    eye = np.eye(STATE_DIM)
    S1 = J1x
    S2 = J2x @ (eye + 0.5 * dtm * S1)
    S3 = J3x @ (eye + 0.5 * dtm * S2)
    S4 = J4x @ (eye + dtm * S3)
    A = eye + (dtm / 6.0) * (S1 + 2 * S2 + 2 * S3 + S4)

    T1 = J1u
    T2 = J2u + 0.5 * dtm * (J2x @ T1)
    T3 = J3u + 0.5 * dtm * (J3x @ T2)
    T4 = J4u + dtm * (J4x @ T3)
    B = (dtm / 6.0) * (T1 + 2 * T2 + 2 * T3 + T4)

    # sensitivity of the stage states / slopes to dt
    g2 = np.matmul(J2x, (0.5 * k1)[..., None])[..., 0]
    g3 = np.matmul(J3x, (0.5 * k2 + 0.5 * dtc * g2)[..., None])[..., 0]
    g4 = np.matmul(J4x, (k3 + dtc * g3)[..., None])[..., 0]
    g = ksum / 6.0 + (dtc / 6.0) * (2 * g2 + 2 * g3 + g4)

    if renormalize:
        q = out[..., QUAT]
        qh = q / qn
        # d(q/|q|)/dq = (I - qh qh^T)/|q|
        P = (np.eye(4) - qh[..., :, None] * qh[..., None, :]) / qn[..., None]
        A[..., QUAT, :] = P @ A[..., QUAT, :]
        B[..., QUAT, :] = P @ B[..., QUAT, :]
        g[..., QUAT] = np.matmul(P, g[..., QUAT, None])[..., 0]
        out = out.copy()
        out[..., QUAT] /= qn
    return out, A, B, g


def rk4_step_arrays(
    X: np.ndarray, U: np.ndarray, dt, params: QuadrotorParams, renormalize: bool = True
) -> np.ndarray:
    """Classical RK4 step with zero-order-hold input, batched; dt broadcasts."""
    out, _, _, _ = _rk4_core(X, U, dt, params, renormalize, need_jac=False)
    return out


def rk4_jacobians_arrays(
    X: np.ndarray, U: np.ndarray, dt, params: QuadrotorParams, renormalize: bool = False
):
    """Exact derivatives of the RK4 map wrt state, input, and step length.

    Returns (A, B, g) with shapes (...,13,13), (...,13,4), (...,13).  With
    renormalize=True the quaternion unit projection applied by rk4_step_arrays
    is chained into all three derivatives.
    """
    _, A, B, g = _rk4_core(X, U, dt, params, renormalize, need_jac=True)
    return A, B, g


def rk4_step_with_jacobians_arrays(
    X: np.ndarray, U: np.ndarray, dt, params: QuadrotorParams, renormalize: bool = True
):
    """Step and derivatives in one fused evaluation: (x_next, A, B, g)."""
    return _rk4_core(X, U, dt, params, renormalize, need_jac=True)


# ---------------------------------------------------------------------------
# typed public API
# ---------------------------------------------------------------------------


def thrust_mix(u: ControlInput, params: QuadrotorParams) -> WrenchDecomposition:
    """Decompose rotor thrusts into collective acceleration and body torque."""
    c, tau = mix_arrays(u.thrusts, params)
    return WrenchDecomposition(collective_c=float(c), torque=tau)


def continuous_derivative(x: State, u: ControlInput, params: QuadrotorParams) -> StateDerivative:
    """Continuous-time state derivative; rejects non-finite input."""
    xv = x.as_array()
    uv = u.as_array()
    if not (np.all(np.isfinite(xv)) and np.all(np.isfinite(uv))):
        raise ValueError("non-finite state or input")
    if abs(np.linalg.norm(x.q) - 1.0) > 1e-6:
        raise ValueError("quaternion not unit norm")
    d = derivative_arrays(xv, uv, params)
    return StateDerivative(d[POS], d[VEL], d[QUAT], d[OMEGA])


def rk4_step(x: State, u: ControlInput, dt: float, params: QuadrotorParams) -> State:
    """One RK4 step followed by quaternion renormalization."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    out = rk4_step_arrays(x.as_array(), u.as_array(), dt, params, renormalize=True)
    if not np.all(np.isfinite(out)):
        raise DivergenceError(f"non-finite state after step of dt={dt}")
    return State.from_array(out)


def step_jacobians(
    x: State, u: ControlInput, dt: float, params: QuadrotorParams, renormalize: bool = False
):
    """Derivatives of the discrete step wrt state, input, and dt.

    By default these are the derivatives of the raw RK4 map, without the unit
    projection applied in simulation; pass renormalize=True to chain it.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    A, B, g = rk4_jacobians_arrays(x.as_array(), u.as_array(), dt, params, renormalize=renormalize)
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B)) and np.all(np.isfinite(g))):
        raise DivergenceError("non-finite step jacobians")
    return A, B, g
