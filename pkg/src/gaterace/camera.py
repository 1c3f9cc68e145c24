"""Pinhole camera with Brown-Conrady distortion, homographies and planar calibration."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._kernels_py import reprojection_residuals
from .geometry import rodrigues_to_rotation

UNDISTORT_MAX_ITER = 20
UNDISTORT_TOL = 1e-10


class BehindCameraError(ValueError):
    pass


class UndistortError(ArithmeticError):
    pass


class DegenerateConfigurationError(ValueError):
    pass


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("optical centre must lie on the sensor")

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.fx, self.fy, self.cx, self.cy])

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Distortion:
    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    k3: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(c) for c in self.vector):
            raise ValueError("distortion coefficients must be finite")

    @property
    def vector(self) -> np.ndarray:
        """OpenCV order ``[k1, k2, p1, p2, k3]``."""
        return np.array([self.k1, self.k2, self.p1, self.p2, self.k3])


@dataclass(frozen=True)
class CameraModel:
    intrinsics: Intrinsics
    distortion: Distortion = field(default_factory=Distortion)

    def __post_init__(self):
        # inversion must converge everywhere on the sensor
        w, h = self.intrinsics.width, self.intrinsics.height
        gu, gv = np.meshgrid(np.linspace(0, w - 1, 9), np.linspace(0, h - 1, 9))
        grid = np.column_stack((gu.ravel(), gv.ravel()))
        _, ok = kernels.undistort_points(
            grid, self.intrinsics.vector, self.distortion.vector, UNDISTORT_MAX_ITER, UNDISTORT_TOL
        )
        if not ok:
            raise ValueError("distortion is not invertible over the sensor")

    def to_dict(self) -> dict:
        i = self.intrinsics
        return {
            "fx": i.fx,
            "fy": i.fy,
            "cx": i.cx,
            "cy": i.cy,
            "width": i.width,
            "height": i.height,
            "dist": self.distortion.vector.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> CameraModel:
        k1, k2, p1, p2, k3 = d.get("dist", [0.0] * 5)
        return cls(
            Intrinsics(d["fx"], d["fy"], d["cx"], d["cy"], int(d["width"]), int(d["height"])),
            Distortion(k1, k2, p1, p2, k3),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> CameraModel:
        return cls.from_dict(json.loads(text))

    def in_sensor(self, uv: np.ndarray) -> np.ndarray:
        uv = np.atleast_2d(uv)
        i = self.intrinsics
        return (uv[:, 0] >= 0) & (uv[:, 0] <= i.width - 1) & (uv[:, 1] >= 0) & (uv[:, 1] <= i.height - 1)


def default_camera() -> CameraModel:
    """Stand-in for the platform FPV camera (the real intrinsics are unpublished)."""
    return CameraModel(Intrinsics(920.0, 920.0, 480.0, 360.0, 960, 720))


def project(cam: CameraModel, p_cam) -> np.ndarray:
    """Project camera-frame points (shape (3,) or (n, 3)) to pixels."""
    p = np.asarray(p_cam, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if np.any(p[:, 2] <= 0.0):
        raise BehindCameraError("point has non-positive depth")
    uv = kernels.project_points(p, cam.intrinsics.vector, cam.distortion.vector)
    return uv[0] if single else uv


def undistort(cam: CameraModel, px) -> np.ndarray:
    """Pixel(s) -> normalized image coordinates ``(X/Z, Y/Z)``."""
    q = np.asarray(px, dtype=float)
    single = q.ndim == 1
    xy, ok = kernels.undistort_points(
        np.atleast_2d(q), cam.intrinsics.vector, cam.distortion.vector, UNDISTORT_MAX_ITER, UNDISTORT_TOL
    )
    if not ok:
        raise UndistortError(f"undistortion did not converge in {UNDISTORT_MAX_ITER} iterations")
    return xy[0] if single else xy


def _normalizer(pts: np.ndarray) -> np.ndarray:
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    s = math.sqrt(2.0) / d if d > 0 else 1.0
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def _has_collinear_triple(pts: np.ndarray, rel_tol: float = 1e-9) -> bool:
    n = len(pts)
    scale = max(float(np.ptp(pts, axis=0).max()), 1e-300) ** 2
    for i in range(n):
        for j in range(i + 1, n):
            d = pts[j] - pts[i]
            e = pts[j + 1 :] - pts[i]
            cross = np.abs(d[0] * e[:, 1] - d[1] * e[:, 0])
            if np.any(cross <= rel_tol * scale):
                return True
    return False


def estimate_homography(src, dst) -> np.ndarray:
    """Normalized DLT homography mapping planar points ``src`` onto ``dst``.

    Returns H with ``H[2, 2] == 1``. With exactly four points any collinear
    triple is rejected; with more, rank deficiency of the design matrix is.
    """
    src = np.asarray(src, dtype=float)[:, :2]
    dst = np.asarray(dst, dtype=float)[:, :2]
    n = len(src)
    if n < 4 or len(dst) != n:
        raise DegenerateConfigurationError("need at least 4 matching point pairs")
    if n == 4 and (_has_collinear_triple(src) or _has_collinear_triple(dst)):
        raise DegenerateConfigurationError("three of the four points are collinear")
    Ts, Td = _normalizer(src), _normalizer(dst)
    s = src @ Ts[:2, :2].T + Ts[:2, 2]
    d = dst @ Td[:2, :2].T + Td[:2, 2]
    A = np.zeros((2 * n, 9))
    A[0::2, 0:2] = s
    A[0::2, 2] = 1.0
    A[0::2, 6:8] = -d[:, :1] * s
    A[0::2, 8] = -d[:, 0]
    A[1::2, 3:5] = s
    A[1::2, 5] = 1.0
    A[1::2, 6:8] = -d[:, 1:2] * s
    A[1::2, 8] = -d[:, 1]
    _, sv, vt = np.linalg.svd(A)
    if sv[7] <= 1e-12 * sv[0]:
        raise DegenerateConfigurationError("homography design matrix is rank deficient")
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.solve(Td, Hn @ Ts)
    if abs(H[2, 2]) < 1e-15:
        raise DegenerateConfigurationError("homography maps the origin to infinity")
    return H / H[2, 2]


# -- calibration ------------------------------------------------------------


@dataclass
class CalibrationResult:
    camera: CameraModel
    rms: float
    poses: list[tuple[np.ndarray, np.ndarray]]
    cost_history: list[float]
    iterations: int


def _v_row(H: np.ndarray, i: int, j: int) -> np.ndarray:
    hi, hj = H[:, i], H[:, j]
    return np.array(
        [
            hi[0] * hj[0],
            hi[0] * hj[1] + hi[1] * hj[0],
            hi[1] * hj[1],
            hi[2] * hj[0] + hi[0] * hj[2],
            hi[2] * hj[1] + hi[1] * hj[2],
            hi[2] * hj[2],
        ]
    )


def _closed_form_intrinsics(Hs: list[np.ndarray], cond_tol: float) -> np.ndarray:
    V = []
    for H in Hs:
        V.append(_v_row(H, 0, 1))
        V.append(_v_row(H, 0, 0) - _v_row(H, 1, 1))
    V = np.array(V)
    _, sv, vt = np.linalg.svd(V)
    if sv[-2] < cond_tol * sv[0]:
        raise CalibrationError("views are too close to parallel to constrain the intrinsics")
    b = vt[-1]
    B11, B12, B22, B13, B23, B33 = b
    den = B11 * B22 - B12 * B12
    if abs(den) < 1e-300 or abs(B11) < 1e-300:
        raise CalibrationError("degenerate image of the absolute conic")
    v0 = (B12 * B13 - B11 * B23) / den
    lam = B33 - (B13 * B13 + v0 * (B12 * B13 - B11 * B23)) / B11
    if lam / B11 <= 0 or lam * B11 / den <= 0:
        raise CalibrationError("image of the absolute conic is not positive definite")
    alpha = math.sqrt(lam / B11)
    beta = math.sqrt(lam * B11 / den)
    gamma = -B12 * alpha * alpha * beta / lam
    u0 = gamma * v0 / beta - B13 * alpha * alpha / lam
    return np.array([[alpha, gamma, u0], [0.0, beta, v0], [0.0, 0.0, 1.0]])


def _view_extrinsics(K: np.ndarray, H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    M = np.linalg.solve(K, H)
    lam = 1.0 / np.linalg.norm(M[:, 0])
    if M[2, 2] * lam < 0:  # plane origin must be in front of the camera
        lam = -lam
    r1, r2, t = lam * M[:, 0], lam * M[:, 1], lam * M[:, 2]
    Q = np.column_stack((r1, r2, np.cross(r1, r2)))
    U, _, Vt = np.linalg.svd(Q)
    R = U @ Vt
    if np.linalg.det(R) < 0:
        R = U @ np.diag([1.0, 1.0, -1.0]) @ Vt
    return R, t


def _calib_residuals(params, poses, views, want_jac):
    intr, dist = params[:4], params[4:9]
    res_all, rows = [], []
    nv = len(views)
    for v, ((obj, img), (R, t)) in enumerate(zip(views, poses)):
        res, Jp = reprojection_residuals(R, t, obj, img, intr, dist, want_jac)
        res_all.append(res)
        if not want_jac:
            continue
        fx, fy = intr[0], intr[1]
        pc = obj @ R.T + t
        x = pc[:, 0] / pc[:, 2]
        y = pc[:, 1] / pc[:, 2]
        r2 = x * x + y * y
        radial = 1.0 + r2 * (dist[0] + r2 * (dist[1] + r2 * dist[4]))
        xd = x * radial + 2 * dist[2] * x * y + dist[3] * (r2 + 2 * x * x)
        yd = y * radial + dist[2] * (r2 + 2 * y * y) + 2 * dist[3] * x * y
        n = len(obj)
        J = np.zeros((2 * n, 9 + 6 * nv))
        J[0::2, 0] = xd
        J[0::2, 2] = 1.0
        J[1::2, 1] = yd
        J[1::2, 3] = 1.0
        # d/d[k1, k2, p1, p2, k3]
        J[0::2, 4] = fx * x * r2
        J[0::2, 5] = fx * x * r2 * r2
        J[0::2, 6] = fx * 2 * x * y
        J[0::2, 7] = fx * (r2 + 2 * x * x)
        J[0::2, 8] = fx * x * r2 ** 3
        J[1::2, 4] = fy * y * r2
        J[1::2, 5] = fy * y * r2 * r2
        J[1::2, 6] = fy * (r2 + 2 * y * y)
        J[1::2, 7] = fy * 2 * x * y
        J[1::2, 8] = fy * y * r2 ** 3
        J[:, 9 + 6 * v : 15 + 6 * v] = Jp
        rows.append(J)
    res = np.concatenate(res_all)
    return res, (np.vstack(rows) if want_jac else None)


def _apply_step(params, poses, delta):
    new_params = params + delta[:9]
    new_poses = []
    for v, (R, t) in enumerate(poses):
        d = delta[9 + 6 * v : 15 + 6 * v]
        new_poses.append((rodrigues_to_rotation(d[:3]) @ R, t + d[3:]))
    return new_params, new_poses


def calibrate_planar(
    views,
    width: int,
    height: int,
    *,
    max_iter: int = 100,
    lam0: float = 1e-3,
    step_tol: float = 1e-10,
    cond_tol: float = 1e-9,
) -> CalibrationResult:
    """Zhang-style calibration from synthetic planar correspondences.

    Parameters
    ----------
    views : sequence of (object_points, image_points)
        Object points lie on the target plane (``z = 0``; shape (n, 2) or
        (n, 3)), image points are distorted pixels of shape (n, 2).
    width, height : int
        Sensor size in pixels.

    Returns
    -------
    CalibrationResult
        Refined camera, RMS reprojection error in pixels, per-view poses
        (camera <- target) and the cost after every accepted LM step.
    """
    if len(views) < 3:
        raise CalibrationError(f"need at least 3 views, got {len(views)}")
    prepared = []
    for obj, img in views:
        obj = np.asarray(obj, dtype=float)
        img = np.asarray(img, dtype=float)
        if obj.shape[1] == 2:
            obj = np.column_stack((obj, np.zeros(len(obj))))
        elif np.any(np.abs(obj[:, 2]) > 1e-9):
            raise CalibrationError("target points must lie on z = 0")
        prepared.append((obj, img))

    # condition the pixel coordinates before solving for the conic
    N = np.array([[2.0 / width, 0.0, -1.0], [0.0, 2.0 / width, -height / width], [0.0, 0.0, 1.0]])
    Hs = [estimate_homography(obj[:, :2], img) for obj, img in prepared]
    Kn = _closed_form_intrinsics([N @ H for H in Hs], cond_tol)
    K = np.linalg.solve(N, Kn)
    K /= K[2, 2]
    poses = [_view_extrinsics(K, H) for H in Hs]
    params = np.array([K[0, 0], K[1, 1], K[0, 2], K[1, 2], 0.0, 0.0, 0.0, 0.0, 0.0])

    res, J = _calib_residuals(params, poses, prepared, True)
    cost = float(res @ res)
    history = [cost]
    lam = lam0
    it = 0
    while it < max_iter and cost > 0.0:
        it += 1
        A = J.T @ J
        g = J.T @ res
        M = A + lam * np.diag(np.diag(A) + 1e-12)
        try:
            delta = -np.linalg.solve(M, g)
        except np.linalg.LinAlgError:
            lam *= 10.0
            continue
        cand_params, cand_poses = _apply_step(params, poses, delta)
        if all(np.all(obj @ R[2] + t[2] > 0) for (obj, _), (R, t) in zip(prepared, cand_poses)):
            rn, _ = _calib_residuals(cand_params, cand_poses, prepared, False)
            cn = float(rn @ rn)
        else:
            cn = math.inf
        if cn < cost:
            params, poses, cost = cand_params, cand_poses, cn
            res, J = _calib_residuals(params, poses, prepared, True)
            history.append(cost)
            lam /= 10.0
        else:
            lam *= 10.0
        if float(np.linalg.norm(delta)) < step_tol or lam > 1e16:
            break

    n_pts = sum(len(obj) for obj, _ in prepared)
    fx, fy, cx, cy = params[:4]
    try:
        cam = CameraModel(Intrinsics(float(fx), float(fy), float(cx), float(cy), width, height),
                          Distortion(*(float(c) for c in params[4:9])))
    except ValueError as exc:
        raise CalibrationError(f"calibration produced an invalid camera: {exc}") from exc
    A = J.T @ J
    sv = np.linalg.svd(A[:9, :9], compute_uv=False)
    if sv[-1] < 1e-14 * sv[0]:
        warnings.warn("calibration is poorly conditioned; add views with more varied tilt", stacklevel=2)
    return CalibrationResult(
        cam,
        math.sqrt(cost / n_pts),
        [(R, t) for R, t in poses],
        history,
        it,
    )


def synthesize_views(cam: CameraModel, n_views: int, rng: np.random.Generator, *,
                     cols: int = 11, rows: int = 8, square: float = 35.0,
                     noise_px: float = 0.0):
    """Planar-target correspondences seen by ``cam`` from varied poses."""
    gx, gy = np.meshgrid(np.arange(cols) * square, np.arange(rows) * square)
    obj = np.column_stack((gx.ravel(), gy.ravel(), np.zeros(cols * rows)))
    obj[:, :2] -= obj[:, :2].mean(axis=0)
    views = []
    while len(views) < n_views:
        tilt = rng.uniform(15.0, 40.0)
        axis_angle = rng.uniform(0, 2 * math.pi)
        axis = np.array([math.cos(axis_angle), math.sin(axis_angle), 0.0])
        spin = rng.uniform(-20.0, 20.0)
        R = rodrigues_to_rotation(axis * math.radians(tilt)) @ rodrigues_to_rotation(
            np.array([0.0, 0.0, math.radians(spin)])
        )
        t = np.array([rng.uniform(-180, 180), rng.uniform(-120, 120), rng.uniform(480, 750)])
        pc = obj @ R.T + t
        if np.any(pc[:, 2] <= 0):
            continue
        img = project(cam, pc)
        if not np.all(cam.in_sensor(img)):
            continue
        if noise_px > 0:
            img = img + rng.normal(0.0, noise_px, img.shape)
        views.append((obj.copy(), img))
    return views


__all__ = [
    "BehindCameraError",
    "CalibrationError",
    "CalibrationResult",
    "CameraModel",
    "DegenerateConfigurationError",
    "Distortion",
    "Intrinsics",
    "UndistortError",
    "calibrate_planar",
    "default_camera",
    "estimate_homography",
    "project",
    "synthesize_views",
    "undistort",
]
