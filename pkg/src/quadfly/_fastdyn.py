"""Compiled RK4 kernel: same math as the numpy path in dynamics.py.

The batched Jacobian assembly spends most of its time in small-array numpy
overhead; this njit version runs the per-sample loops directly.  Kept in its
own module so dynamics.py can fall back to numpy when numba is unavailable.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _stage_nb(x, c, tau, drag, inertia, mass, gravity, mix, k, Jx, Ju, need_jac):
    vx, vy, vz = x[3], x[4], x[5]
    qw, qx, qy, qz = x[6], x[7], x[8], x[9]
    wx, wy, wz = x[10], x[11], x[12]

    R = np.empty((3, 3))
    ww, xx, yy, zz = qw * qw, qx * qx, qy * qy, qz * qz
    R[0, 0] = ww + xx - yy - zz
    R[0, 1] = 2 * (qx * qy - qw * qz)
    R[0, 2] = 2 * (qx * qz + qw * qy)
    R[1, 0] = 2 * (qx * qy + qw * qz)
    R[1, 1] = ww - xx + yy - zz
    R[1, 2] = 2 * (qy * qz - qw * qx)
    R[2, 0] = 2 * (qx * qz - qw * qy)
    R[2, 1] = 2 * (qy * qz + qw * qx)
    R[2, 2] = ww - xx - yy + zz

    vb0 = R[0, 0] * vx + R[1, 0] * vy + R[2, 0] * vz
    vb1 = R[0, 1] * vx + R[1, 1] * vy + R[2, 1] * vz
    vb2 = R[0, 2] * vx + R[1, 2] * vy + R[2, 2] * vz
    db0, db1, db2 = drag[0] * vb0, drag[1] * vb1, drag[2] * vb2

    k[0], k[1], k[2] = vx, vy, vz
    k[3] = -c * R[0, 2] - (R[0, 0] * db0 + R[0, 1] * db1 + R[0, 2] * db2)
    k[4] = -c * R[1, 2] - (R[1, 0] * db0 + R[1, 1] * db1 + R[1, 2] * db2)
    k[5] = gravity - c * R[2, 2] - (R[2, 0] * db0 + R[2, 1] * db1 + R[2, 2] * db2)
    k[6] = 0.5 * (-qx * wx - qy * wy - qz * wz)
    k[7] = 0.5 * (qw * wx + qy * wz - qz * wy)
    k[8] = 0.5 * (qw * wy + qz * wx - qx * wz)
    k[9] = 0.5 * (qw * wz + qx * wy - qy * wx)
    j0, j1, j2 = inertia[0], inertia[1], inertia[2]
    k[10] = (tau[0] - (wy * j2 * wz - wz * j1 * wy)) / j0
    k[11] = (tau[1] - (wz * j0 * wx - wx * j2 * wz)) / j1
    k[12] = (tau[2] - (wx * j1 * wy - wy * j0 * wx)) / j2

    if not need_jac:
        return

    for i in range(13):
        for j in range(13):
            Jx[i, j] = 0.0
        for j in range(4):
            Ju[i, j] = 0.0

    Jx[0, 3] = 1.0
    Jx[1, 4] = 1.0
    Jx[2, 5] = 1.0

    # dv'/dv = -R D R^T
    for i in range(3):
        for j in range(3):
            Jx[3 + i, 3 + j] = -(
                R[i, 0] * drag[0] * R[j, 0] + R[i, 1] * drag[1] * R[j, 1] + R[i, 2] * drag[2] * R[j, 2]
            )

    # dR/dq_i, laid out per quaternion component
    dR = np.empty((4, 3, 3))
    dR[0, 0, 0], dR[0, 0, 1], dR[0, 0, 2] = 2 * qw, -2 * qz, 2 * qy
    dR[0, 1, 0], dR[0, 1, 1], dR[0, 1, 2] = 2 * qz, 2 * qw, -2 * qx
    dR[0, 2, 0], dR[0, 2, 1], dR[0, 2, 2] = -2 * qy, 2 * qx, 2 * qw
    dR[1, 0, 0], dR[1, 0, 1], dR[1, 0, 2] = 2 * qx, 2 * qy, 2 * qz
    dR[1, 1, 0], dR[1, 1, 1], dR[1, 1, 2] = 2 * qy, -2 * qx, -2 * qw
    dR[1, 2, 0], dR[1, 2, 1], dR[1, 2, 2] = 2 * qz, 2 * qw, -2 * qx
    dR[2, 0, 0], dR[2, 0, 1], dR[2, 0, 2] = -2 * qy, 2 * qx, 2 * qw
    dR[2, 1, 0], dR[2, 1, 1], dR[2, 1, 2] = 2 * qx, 2 * qy, 2 * qz
    dR[2, 2, 0], dR[2, 2, 1], dR[2, 2, 2] = -2 * qw, 2 * qz, -2 * qy
    dR[3, 0, 0], dR[3, 0, 1], dR[3, 0, 2] = -2 * qz, -2 * qw, 2 * qx
    dR[3, 1, 0], dR[3, 1, 1], dR[3, 1, 2] = 2 * qw, -2 * qz, 2 * qy
    dR[3, 2, 0], dR[3, 2, 1], dR[3, 2, 2] = 2 * qx, 2 * qy, 2 * qz

    # dv'/dq_i = -c dR e_z - dR D R^T v - R D dR^T v
    for i in range(4):
        w0 = dR[i, 0, 0] * vx + dR[i, 1, 0] * vy + dR[i, 2, 0] * vz
        w1 = dR[i, 0, 1] * vx + dR[i, 1, 1] * vy + dR[i, 2, 1] * vz
        w2 = dR[i, 0, 2] * vx + dR[i, 1, 2] * vy + dR[i, 2, 2] * vz
        dw0, dw1, dw2 = drag[0] * w0, drag[1] * w1, drag[2] * w2
        for r in range(3):
            Jx[3 + r, 6 + i] = (
                -c * dR[i, r, 2]
                - (dR[i, r, 0] * db0 + dR[i, r, 1] * db1 + dR[i, r, 2] * db2)
                - (R[r, 0] * dw0 + R[r, 1] * dw1 + R[r, 2] * dw2)
            )

    Jx[6, 7] = -0.5 * wx
    Jx[6, 8] = -0.5 * wy
    Jx[6, 9] = -0.5 * wz
    Jx[7, 6] = 0.5 * wx
    Jx[7, 8] = 0.5 * wz
    Jx[7, 9] = -0.5 * wy
    Jx[8, 6] = 0.5 * wy
    Jx[8, 7] = -0.5 * wz
    Jx[8, 9] = 0.5 * wx
    Jx[9, 6] = 0.5 * wz
    Jx[9, 7] = 0.5 * wy
    Jx[9, 8] = -0.5 * wx

    Jx[6, 10] = -0.5 * qx
    Jx[6, 11] = -0.5 * qy
    Jx[6, 12] = -0.5 * qz
    Jx[7, 10] = 0.5 * qw
    Jx[7, 11] = -0.5 * qz
    Jx[7, 12] = 0.5 * qy
    Jx[8, 10] = 0.5 * qz
    Jx[8, 11] = 0.5 * qw
    Jx[8, 12] = -0.5 * qx
    Jx[9, 10] = -0.5 * qy
    Jx[9, 11] = 0.5 * qx
    Jx[9, 12] = 0.5 * qw

    # dw'/dw = J^-1 (skew(Jw) - skew(w) J)
    Jx[10, 11] = ((j1 - j2) * wz) / j0
    Jx[10, 12] = ((j1 - j2) * wy) / j0
    Jx[11, 10] = ((j2 - j0) * wz) / j1
    Jx[11, 12] = ((j2 - j0) * wx) / j1
    Jx[12, 10] = ((j0 - j1) * wy) / j2
    Jx[12, 11] = ((j0 - j1) * wx) / j2

    for i in range(3):
        zb = R[i, 2] / mass
        for j in range(4):
            Ju[3 + i, j] = -zb
    for i in range(3):
        for j in range(4):
            Ju[10 + i, j] = mix[i, j] / inertia[i]


@njit(cache=True)
def _matmul13(out, a, b):
    for i in range(13):
        for j in range(13):
            s = 0.0
            for l in range(13):
                s += a[i, l] * b[l, j]
            out[i, j] = s


@njit(cache=True)
def _matmul13x4(out, a, b):
    for i in range(13):
        for j in range(4):
            s = 0.0
            for l in range(13):
                s += a[i, l] * b[l, j]
            out[i, j] = s


@njit(cache=True)
def rk4_fused(X, U, dts, mass, gravity, drag, inertia, mix, need_jac, renormalize):
    """Batched RK4 step with optional exact derivatives (A, B, g)."""
    nb = X.shape[0]
    out = np.empty((nb, 13))
    A = np.empty((nb, 13, 13))
    Bu = np.empty((nb, 13, 4))
    g = np.empty((nb, 13))

    k1 = np.empty(13)
    k2 = np.empty(13)
    k3 = np.empty(13)
    k4 = np.empty(13)
    xs = np.empty(13)
    tau = np.empty(3)
    J1x = np.empty((13, 13))
    J2x = np.empty((13, 13))
    J3x = np.empty((13, 13))
    J4x = np.empty((13, 13))
    J1u = np.empty((13, 4))
    J2u = np.empty((13, 4))
    J3u = np.empty((13, 4))
    J4u = np.empty((13, 4))
    T = np.empty((13, 13))
    S1 = np.empty((13, 13))
    S2 = np.empty((13, 13))
    S3 = np.empty((13, 13))
    S4 = np.empty((13, 13))
    T1 = np.empty((13, 4))
    T2 = np.empty((13, 4))
    T3 = np.empty((13, 4))
    T4 = np.empty((13, 4))
    tmp4 = np.empty((13, 4))
    g2 = np.empty(13)
    g3 = np.empty(13)
    g4 = np.empty(13)
    vec = np.empty(13)

    for b in range(nb):
        dt = dts[b]
        x = X[b]
        u = U[b]
        c = (u[0] + u[1] + u[2] + u[3]) / mass
        for i in range(3):
            tau[i] = mix[i, 0] * u[0] + mix[i, 1] * u[1] + mix[i, 2] * u[2] + mix[i, 3] * u[3]

        _stage_nb(x, c, tau, drag, inertia, mass, gravity, mix, k1, J1x, J1u, need_jac)
        for i in range(13):
            xs[i] = x[i] + 0.5 * dt * k1[i]
        _stage_nb(xs, c, tau, drag, inertia, mass, gravity, mix, k2, J2x, J2u, need_jac)
        for i in range(13):
            xs[i] = x[i] + 0.5 * dt * k2[i]
        _stage_nb(xs, c, tau, drag, inertia, mass, gravity, mix, k3, J3x, J3u, need_jac)
        for i in range(13):
            xs[i] = x[i] + dt * k3[i]
        _stage_nb(xs, c, tau, drag, inertia, mass, gravity, mix, k4, J4x, J4u, need_jac)

        for i in range(13):
            out[b, i] = x[i] + (dt / 6.0) * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i])
        qn = np.sqrt(out[b, 6] ** 2 + out[b, 7] ** 2 + out[b, 8] ** 2 + out[b, 9] ** 2)

        if need_jac:
            # S1 = J1x; S_i = J_ix (I + a dt S_{i-1})
            for i in range(13):
                for j in range(13):
                    S1[i, j] = J1x[i, j]
                    T[i, j] = 0.5 * dt * S1[i, j]
                T[i, i] += 1.0
            _matmul13(S2, J2x, T)
            for i in range(13):
                for j in range(13):
                    T[i, j] = 0.5 * dt * S2[i, j]
                T[i, i] += 1.0
            _matmul13(S3, J3x, T)
            for i in range(13):
                for j in range(13):
                    T[i, j] = dt * S3[i, j]
                T[i, i] += 1.0
            _matmul13(S4, J4x, T)
            for i in range(13):
                for j in range(13):
                    A[b, i, j] = (dt / 6.0) * (S1[i, j] + 2 * S2[i, j] + 2 * S3[i, j] + S4[i, j])
                A[b, i, i] += 1.0

            for i in range(13):
                for j in range(4):
                    T1[i, j] = J1u[i, j]
            _matmul13x4(tmp4, J2x, T1)
            for i in range(13):
                for j in range(4):
                    T2[i, j] = J2u[i, j] + 0.5 * dt * tmp4[i, j]
            _matmul13x4(tmp4, J3x, T2)
            for i in range(13):
                for j in range(4):
                    T3[i, j] = J3u[i, j] + 0.5 * dt * tmp4[i, j]
            _matmul13x4(tmp4, J4x, T3)
            for i in range(13):
                for j in range(4):
                    T4[i, j] = J4u[i, j] + dt * tmp4[i, j]
            for i in range(13):
                for j in range(4):
                    Bu[b, i, j] = (dt / 6.0) * (T1[i, j] + 2 * T2[i, j] + 2 * T3[i, j] + T4[i, j])

            # dt sensitivity chained through the stage states
            for i in range(13):
                vec[i] = 0.5 * k1[i]
            for i in range(13):
                s = 0.0
                for l in range(13):
                    s += J2x[i, l] * vec[l]
                g2[i] = s
            for i in range(13):
                vec[i] = 0.5 * k2[i] + 0.5 * dt * g2[i]
            for i in range(13):
                s = 0.0
                for l in range(13):
                    s += J3x[i, l] * vec[l]
                g3[i] = s
            for i in range(13):
                vec[i] = k3[i] + dt * g3[i]
            for i in range(13):
                s = 0.0
                for l in range(13):
                    s += J4x[i, l] * vec[l]
                g4[i] = s
            for i in range(13):
                g[b, i] = (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]) / 6.0 + (dt / 6.0) * (
                    2 * g2[i] + 2 * g3[i] + g4[i]
                )

            if renormalize:
                # chain d(q/|q|)/dq = (I - qh qh^T)/|q| into the q rows
                q0, q1, q2, q3 = out[b, 6] / qn, out[b, 7] / qn, out[b, 8] / qn, out[b, 9] / qn
                for col in range(13):
                    a0 = A[b, 6, col]
                    a1 = A[b, 7, col]
                    a2 = A[b, 8, col]
                    a3 = A[b, 9, col]
                    dot = q0 * a0 + q1 * a1 + q2 * a2 + q3 * a3
                    A[b, 6, col] = (a0 - q0 * dot) / qn
                    A[b, 7, col] = (a1 - q1 * dot) / qn
                    A[b, 8, col] = (a2 - q2 * dot) / qn
                    A[b, 9, col] = (a3 - q3 * dot) / qn
                for col in range(4):
                    a0 = Bu[b, 6, col]
                    a1 = Bu[b, 7, col]
                    a2 = Bu[b, 8, col]
                    a3 = Bu[b, 9, col]
                    dot = q0 * a0 + q1 * a1 + q2 * a2 + q3 * a3
                    Bu[b, 6, col] = (a0 - q0 * dot) / qn
                    Bu[b, 7, col] = (a1 - q1 * dot) / qn
                    Bu[b, 8, col] = (a2 - q2 * dot) / qn
                    Bu[b, 9, col] = (a3 - q3 * dot) / qn
                a0, a1, a2, a3 = g[b, 6], g[b, 7], g[b, 8], g[b, 9]
                dot = q0 * a0 + q1 * a1 + q2 * a2 + q3 * a3
                g[b, 6] = (a0 - q0 * dot) / qn
                g[b, 7] = (a1 - q1 * dot) / qn
                g[b, 8] = (a2 - q2 * dot) / qn
                g[b, 9] = (a3 - q3 * dot) / qn

        if renormalize:
            out[b, 6] /= qn
            out[b, 7] /= qn
            out[b, 8] /= qn
            out[b, 9] /= qn
    return out, A, Bu, g
