"""Pure-Python/numpy implementations of the hot kernels.

Every function here has a twin of the same name and signature in the compiled
``_kernels`` extension. ``gaterace.kernels`` picks one at import time.

Array arguments are float64; ``intr`` is ``[fx, fy, cx, cy]`` and ``dist`` is
``[k1, k2, p1, p2, k3]``.
"""

import math

import numpy as np


def project_points(pts, intr, dist):
    pts = np.asarray(pts, dtype=float)
    fx, fy, cx, cy = intr
    k1, k2, p1, p2, k3 = dist
    x = pts[:, 0] / pts[:, 2]
    y = pts[:, 1] / pts[:, 2]
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
    yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
    return np.column_stack((fx * xd + cx, fy * yd + cy))


def undistort_points(uv, intr, dist, max_iter, tol):
    """Fixed-point inversion of the distortion model.

    Returns ``(normalized_xy, converged)``.
    """
    uv = np.asarray(uv, dtype=float)
    fx, fy, cx, cy = intr
    k1, k2, p1, p2, k3 = dist
    x0 = (uv[:, 0] - cx) / fx
    y0 = (uv[:, 1] - cy) / fy
    x = x0.copy()
    y = y0.copy()
    converged = False
    for _ in range(max_iter):
        r2 = x * x + y * y
        radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
        dx = 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
        dy = p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
        xn = (x0 - dx) / radial
        yn = (y0 - dy) / radial
        step = max(np.max(np.abs(xn - x), initial=0.0), np.max(np.abs(yn - y), initial=0.0))
        x, y = xn, yn
        if not np.isfinite(step):
            break
        if step < tol:
            converged = True
            break
    return np.column_stack((x, y)), converged


def _rodrigues(w):
    theta = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    K = np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])
    if theta < 1e-8:
        return np.eye(3) + K + 0.5 * (K @ K)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def reprojection_residuals(R, t, obj, obs, intr, dist, want_jac):
    fx, fy, cx, cy = intr
    k1, k2, p1, p2, k3 = dist
    pc = obj @ R.T + t
    X, Y, Z = pc[:, 0], pc[:, 1], pc[:, 2]
    iz = 1.0 / Z
    x = X * iz
    y = Y * iz
    r2 = x * x + y * y
    radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3))
    xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x)
    yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y
    res = np.empty(2 * len(obj))
    res[0::2] = fx * xd + cx - obs[:, 0]
    res[1::2] = fy * yd + cy - obs[:, 1]
    if not want_jac:
        return res, None
    drad = k1 + r2 * (2.0 * k2 + 3.0 * k3 * r2)
    dxd_dx = radial + 2.0 * x * x * drad + 2.0 * p1 * y + 6.0 * p2 * x
    dxd_dy = 2.0 * x * y * drad + 2.0 * p1 * x + 2.0 * p2 * y
    dyd_dx = dxd_dy
    dyd_dy = radial + 2.0 * y * y * drad + 6.0 * p1 * y + 2.0 * p2 * x
    n = len(obj)
    # d(x, y)/d(pc)
    dn = np.zeros((n, 2, 3))
    dn[:, 0, 0] = iz
    dn[:, 0, 2] = -x * iz
    dn[:, 1, 1] = iz
    dn[:, 1, 2] = -y * iz
    dd = np.empty((n, 2, 2))
    dd[:, 0, 0] = fx * dxd_dx
    dd[:, 0, 1] = fx * dxd_dy
    dd[:, 1, 0] = fy * dyd_dx
    dd[:, 1, 1] = fy * dyd_dy
    duv_dpc = dd @ dn
    # left perturbation R <- exp(w) R: d(pc)/dw = -[R X]x
    rx = pc - t
    dpc_dw = np.zeros((n, 3, 3))
    dpc_dw[:, 0, 1] = rx[:, 2]
    dpc_dw[:, 0, 2] = -rx[:, 1]
    dpc_dw[:, 1, 0] = -rx[:, 2]
    dpc_dw[:, 1, 2] = rx[:, 0]
    dpc_dw[:, 2, 0] = rx[:, 1]
    dpc_dw[:, 2, 1] = -rx[:, 0]
    J = np.empty((n, 2, 6))
    J[:, :, :3] = duv_dpc @ dpc_dw
    J[:, :, 3:] = duv_dpc
    return res, J.reshape(2 * n, 6)


def refine_pose(R, t, obj, obs, intr, dist, max_iter, lam0, step_tol):
    """Levenberg-Marquardt on reprojection error over a 6-DoF pose.

    Rotation increments are applied on the left, ``R <- exp(w) R``.
    Returns ``(R, t, rms, iterations)``.
    """
    R = np.array(R, dtype=float)
    t = np.array(t, dtype=float)
    obj = np.asarray(obj, dtype=float)
    obs = np.asarray(obs, dtype=float)
    res, J = reprojection_residuals(R, t, obj, obs, intr, dist, True)
    cost = float(res @ res)
    lam = lam0
    it = 0
    while it < max_iter and cost > 0.0:
        it += 1
        A = J.T @ J
        g = J.T @ res
        M = A + lam * np.diag(np.diag(A) + 1e-12)
        try:
            L = np.linalg.cholesky(M)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        delta = -np.linalg.solve(L.T, np.linalg.solve(L, g))
        Rn = _rodrigues(delta[:3]) @ R
        tn = t + delta[3:]
        step = float(np.linalg.norm(delta))
        if tn[2] > 0.0 and np.all(obj @ Rn[2] + tn[2] > 0.0):
            rn, _ = reprojection_residuals(Rn, tn, obj, obs, intr, dist, False)
            cn = float(rn @ rn)
        else:
            cn = math.inf
        if cn < cost:
            R, t, cost = Rn, tn, cn
            res, J = reprojection_residuals(R, t, obj, obs, intr, dist, True)
            lam /= 10.0
        else:
            lam *= 10.0
        if step < step_tol or lam > 1e16:
            break
    return R, t, math.sqrt(cost / len(obj)), it


def integrate_plant(state, dist_state, cmd, tau_v, tau_w, dt, nsteps, noise, sigma, noise_tau, v_ref):
    """Advance the first-order-lag plant by ``nsteps`` substeps.

    ``state`` is ``[x, y, z, yaw_deg, vx, vy, vz, wz]`` (world frame),
    ``dist_state`` the horizontal velocity disturbance, ``cmd`` the body-frame
    command ``[vx, vy, vz, wz]`` and ``noise`` an ``(nsteps, 2)`` array of
    standard normal draws. Returns new ``(state, dist_state)`` arrays.
    """
    x, y, z, yaw, vx, vy, vz, wz = (float(s) for s in state)
    dx, dy = float(dist_state[0]), float(dist_state[1])
    cvx, cvy, cvz, cwz = (float(c) for c in cmd)
    av = math.exp(-dt / tau_v)
    aw = math.exp(-dt / tau_w)
    an = math.exp(-dt / noise_tau) if noise_tau > 0.0 else 0.0
    bn = math.sqrt(1.0 - an * an)
    for k in range(nsteps):
        yr = math.radians(yaw)
        c, s = math.cos(yr), math.sin(yr)
        tx = c * cvx - s * cvy
        ty = s * cvx + c * cvy
        vx = tx + (vx - tx) * av
        vy = ty + (vy - ty) * av
        vz = cvz + (vz - cvz) * av
        wz = cwz + (wz - cwz) * aw
        if sigma > 0.0:
            se = sigma * math.sqrt(vx * vx + vy * vy) / v_ref
            dx = an * dx + se * bn * noise[k][0]
            dy = an * dy + se * bn * noise[k][1]
        x += dt * (vx + dx)
        y += dt * (vy + dy)
        z += dt * vz
        yaw += dt * wz
        if yaw > 180.0:
            yaw -= 360.0
        elif yaw <= -180.0:
            yaw += 360.0
    return np.array([x, y, z, yaw, vx, vy, vz, wz]), np.array([dx, dy])
