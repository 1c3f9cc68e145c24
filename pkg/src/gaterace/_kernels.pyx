# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Mirrors ``_kernels_py`` one-for-one."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, sin, cos, exp, fabs, INFINITY, M_PI, isfinite

cnp.import_array()


cdef inline void _distort(double x, double y, double[5] d,
                          double* xd, double* yd) noexcept nogil:
    cdef double r2 = x * x + y * y
    cdef double radial = 1.0 + r2 * (d[0] + r2 * (d[1] + r2 * d[4]))
    xd[0] = x * radial + 2.0 * d[2] * x * y + d[3] * (r2 + 2.0 * x * x)
    yd[0] = y * radial + d[2] * (r2 + 2.0 * y * y) + 2.0 * d[3] * x * y


def project_points(pts, intr, dist):
    cdef double[:, ::1] p = np.ascontiguousarray(pts, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0], i
    cdef double fx = intr[0], fy = intr[1], cx = intr[2], cy = intr[3]
    cdef double[5] d
    for i in range(5):
        d[i] = dist[i]
    out = np.empty((n, 2), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double xd, yd
    with nogil:
        for i in range(n):
            _distort(p[i, 0] / p[i, 2], p[i, 1] / p[i, 2], d, &xd, &yd)
            o[i, 0] = fx * xd + cx
            o[i, 1] = fy * yd + cy
    return out


def undistort_points(uv, intr, dist, int max_iter, double tol):
    cdef double[:, ::1] q = np.ascontiguousarray(uv, dtype=np.float64)
    cdef Py_ssize_t n = q.shape[0], i
    cdef double fx = intr[0], fy = intr[1], cx = intr[2], cy = intr[3]
    cdef double k1 = dist[0], k2 = dist[1], p1 = dist[2], p2 = dist[3], k3 = dist[4]
    out = np.empty((n, 2), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double x0, y0, x, y, r2, radial, dx, dy, xn, yn, step
    cdef int it, ok
    cdef bint all_ok = True
    with nogil:
        for i in range(n):
            x0 = (q[i, 0] - cx) / fx
            y0 = (q[i, 1] - cy) / fy
            x = x0
            y = y0
            ok = 0
            for it in range(max_iter):
                r2 = x * x + y * y
                radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
                dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
                dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
                xn = (x0 - dx) / radial
                yn = (y0 - dy) / radial
                step = fabs(xn - x)
                if fabs(yn - y) > step:
                    step = fabs(yn - y)
                x = xn
                y = yn
                if not isfinite(step):
                    break
                if step < tol:
                    ok = 1
                    break
            if not ok:
                all_ok = False
            o[i, 0] = x
            o[i, 1] = y
    return out, bool(all_ok)


cdef void _rodrigues(double* w, double* R) noexcept nogil:
    cdef double th = sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    cdef double a, b
    cdef double K[9]
    cdef double KK[9]
    cdef int i, j, k
    K[0] = 0.0; K[1] = -w[2]; K[2] = w[1]
    K[3] = w[2]; K[4] = 0.0; K[5] = -w[0]
    K[6] = -w[1]; K[7] = w[0]; K[8] = 0.0
    for i in range(3):
        for j in range(3):
            KK[3 * i + j] = 0.0
            for k in range(3):
                KK[3 * i + j] += K[3 * i + k] * K[3 * k + j]
    if th < 1e-8:
        a = 1.0
        b = 0.5
    else:
        a = sin(th) / th
        b = (1.0 - cos(th)) / (th * th)
    for i in range(9):
        R[i] = a * K[i] + b * KK[i]
    R[0] += 1.0
    R[4] += 1.0
    R[8] += 1.0


cdef double _residuals(double* R, double* t, double[:, ::1] obj, double[:, ::1] obs,
                       double[4] K, double[5] d, double* res, double* J) noexcept nogil:
    """Fill residuals (and the 2n x 6 Jacobian when J != NULL); return cost.

    Returns +inf when any point falls behind the camera.
    """
    cdef Py_ssize_t n = obj.shape[0], i
    cdef double X, Y, Z, rx, ry, rz, iz, x, y, r2, radial, drad, xd, yd
    cdef double a00, a01, a10, a11, u0, u1, u2, v0, v1, v2
    cdef double cost = 0.0
    for i in range(n):
        rx = R[0] * obj[i, 0] + R[1] * obj[i, 1] + R[2] * obj[i, 2]
        ry = R[3] * obj[i, 0] + R[4] * obj[i, 1] + R[5] * obj[i, 2]
        rz = R[6] * obj[i, 0] + R[7] * obj[i, 1] + R[8] * obj[i, 2]
        X = rx + t[0]
        Y = ry + t[1]
        Z = rz + t[2]
        if Z <= 0.0:
            return INFINITY
        iz = 1.0 / Z
        x = X * iz
        y = Y * iz
        r2 = x * x + y * y
        radial = 1.0 + r2 * (d[0] + r2 * (d[1] + r2 * d[4]))
        xd = x * radial + 2.0 * d[2] * x * y + d[3] * (r2 + 2.0 * x * x)
        yd = y * radial + d[2] * (r2 + 2.0 * y * y) + 2.0 * d[3] * x * y
        res[2 * i] = K[0] * xd + K[2] - obs[i, 0]
        res[2 * i + 1] = K[1] * yd + K[3] - obs[i, 1]
        cost += res[2 * i] * res[2 * i] + res[2 * i + 1] * res[2 * i + 1]
        if J != NULL:
            drad = d[0] + r2 * (2.0 * d[1] + 3.0 * d[4] * r2)
            a00 = K[0] * (radial + 2.0 * x * x * drad + 2.0 * d[2] * y + 6.0 * d[3] * x)
            a01 = K[0] * (2.0 * x * y * drad + 2.0 * d[2] * x + 2.0 * d[3] * y)
            a10 = K[1] * (2.0 * x * y * drad + 2.0 * d[2] * x + 2.0 * d[3] * y)
            a11 = K[1] * (radial + 2.0 * y * y * drad + 6.0 * d[2] * y + 2.0 * d[3] * x)
            # rows of d(u, v)/d(pc)
            u0 = a00 * iz
            u1 = a01 * iz
            u2 = -(a00 * x + a01 * y) * iz
            v0 = a10 * iz
            v1 = a11 * iz
            v2 = -(a10 * x + a11 * y) * iz
            # times d(pc)/dw = -[r]x
            J[12 * i + 0] = -u1 * rz + u2 * ry
            J[12 * i + 1] = u0 * rz - u2 * rx
            J[12 * i + 2] = -u0 * ry + u1 * rx
            J[12 * i + 3] = u0
            J[12 * i + 4] = u1
            J[12 * i + 5] = u2
            J[12 * i + 6] = -v1 * rz + v2 * ry
            J[12 * i + 7] = v0 * rz - v2 * rx
            J[12 * i + 8] = -v0 * ry + v1 * rx
            J[12 * i + 9] = v0
            J[12 * i + 10] = v1
            J[12 * i + 11] = v2
    return cost


cdef bint _cholesky_solve6(double* M, double* b, double* x) noexcept nogil:
    cdef double L[36]
    cdef double z[6]
    cdef double s
    cdef int i, j, k
    for i in range(36):
        L[i] = 0.0
    for i in range(6):
        for j in range(i + 1):
            s = M[6 * i + j]
            for k in range(j):
                s -= L[6 * i + k] * L[6 * j + k]
            if i == j:
                if s <= 0.0:
                    return False
                L[6 * i + i] = sqrt(s)
            else:
                L[6 * i + j] = s / L[6 * j + j]
    for i in range(6):
        s = b[i]
        for k in range(i):
            s -= L[6 * i + k] * z[k]
        z[i] = s / L[6 * i + i]
    for i in range(5, -1, -1):
        s = z[i]
        for k in range(i + 1, 6):
            s -= L[6 * k + i] * x[k]
        x[i] = s / L[6 * i + i]
    return True


def refine_pose(R0, t0, obj_in, obs_in, intr, dist, int max_iter, double lam0, double step_tol):
    cdef double[:, ::1] obj = np.ascontiguousarray(obj_in, dtype=np.float64)
    cdef double[:, ::1] obs = np.ascontiguousarray(obs_in, dtype=np.float64)
    cdef Py_ssize_t n = obj.shape[0]
    cdef double[4] K
    cdef double[5] d
    cdef double R[9]
    cdef double Rn[9]
    cdef double dR[9]
    cdef double t[3]
    cdef double tn[3]
    cdef double A[36]
    cdef double M[36]
    cdef double g[6]
    cdef double delta[6]
    cdef int i, j, k, it = 0
    cdef double cost, cn, lam = lam0, step
    Rin = np.ascontiguousarray(R0, dtype=np.float64).reshape(9)
    tin = np.ascontiguousarray(t0, dtype=np.float64).reshape(3)
    for i in range(9):
        R[i] = Rin[i]
    for i in range(3):
        t[i] = tin[i]
    for i in range(4):
        K[i] = intr[i]
    for i in range(5):
        d[i] = dist[i]
    res_a = np.empty(2 * n)
    jac_a = np.empty(12 * n)
    rn_a = np.empty(2 * n)
    cdef double[::1] res = res_a
    cdef double[::1] jac = jac_a
    cdef double[::1] rn = rn_a
    with nogil:
        cost = _residuals(R, t, obj, obs, K, d, &res[0], &jac[0])
        while it < max_iter and cost > 0.0:
            it += 1
            for i in range(6):
                g[i] = 0.0
                for j in range(6):
                    A[6 * i + j] = 0.0
            for k in range(2 * n):
                for i in range(6):
                    g[i] += jac[6 * k + i] * res[k]
                    for j in range(i + 1):
                        A[6 * i + j] += jac[6 * k + i] * jac[6 * k + j]
            for i in range(6):
                for j in range(i):
                    A[6 * j + i] = A[6 * i + j]
            for i in range(36):
                M[i] = A[i]
            for i in range(6):
                M[7 * i] += lam * (A[7 * i] + 1e-12)
                g[i] = -g[i]
            if not _cholesky_solve6(M, g, delta):
                lam *= 10.0
                continue
            _rodrigues(delta, dR)
            for i in range(3):
                for j in range(3):
                    Rn[3 * i + j] = 0.0
                    for k in range(3):
                        Rn[3 * i + j] += dR[3 * i + k] * R[3 * k + j]
                tn[i] = t[i] + delta[3 + i]
            step = 0.0
            for i in range(6):
                step += delta[i] * delta[i]
            step = sqrt(step)
            cn = _residuals(Rn, tn, obj, obs, K, d, &rn[0], NULL)
            if cn < cost:
                for i in range(9):
                    R[i] = Rn[i]
                for i in range(3):
                    t[i] = tn[i]
                cost = _residuals(R, t, obj, obs, K, d, &res[0], &jac[0])
                lam /= 10.0
            else:
                lam *= 10.0
            if step < step_tol or lam > 1e16:
                break
    Rout = np.empty((3, 3))
    tout = np.empty(3)
    for i in range(9):
        Rout[i // 3, i % 3] = R[i]
    for i in range(3):
        tout[i] = t[i]
    return Rout, tout, sqrt(cost / n), it


def integrate_plant(state, dist_state, cmd, double tau_v, double tau_w, double dt, int nsteps,
                    noise, double sigma, double noise_tau, double v_ref):
    cdef double x = state[0], y = state[1], z = state[2], yaw = state[3]
    cdef double vx = state[4], vy = state[5], vz = state[6], wz = state[7]
    cdef double dx = dist_state[0], dy = dist_state[1]
    cdef double cvx = cmd[0], cvy = cmd[1], cvz = cmd[2], cwz = cmd[3]
    cdef double av = exp(-dt / tau_v), aw = exp(-dt / tau_w)
    cdef double an = exp(-dt / noise_tau) if noise_tau > 0.0 else 0.0
    cdef double bn = sqrt(1.0 - an * an)
    cdef double yr, c, s, tx, ty, se
    cdef double[:, ::1] nz
    cdef int k
    if sigma > 0.0:
        nz = np.ascontiguousarray(noise, dtype=np.float64)
    for k in range(nsteps):
        yr = yaw * (M_PI / 180.0)
        c = cos(yr)
        s = sin(yr)
        tx = c * cvx - s * cvy
        ty = s * cvx + c * cvy
        vx = tx + (vx - tx) * av
        vy = ty + (vy - ty) * av
        vz = cvz + (vz - cvz) * av
        wz = cwz + (wz - cwz) * aw
        if sigma > 0.0:
            se = sigma * sqrt(vx * vx + vy * vy) / v_ref
            dx = an * dx + se * bn * nz[k, 0]
            dy = an * dy + se * bn * nz[k, 1]
        x += dt * (vx + dx)
        y += dt * (vy + dy)
        z += dt * vz
        yaw += dt * wz
        if yaw > 180.0:
            yaw -= 360.0
        elif yaw <= -180.0:
            yaw += 360.0
    return np.array([x, y, z, yaw, vx, vy, vz, wz]), np.array([dx, dy])
