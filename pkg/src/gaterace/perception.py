"""Synthetic marker observation, single-marker PnP and last-known-pose tracking.

The image-space detector is replaced by a geometric model: marker corners are
projected through the camera, gated by visibility rules, perturbed with
Gaussian pixel noise and randomly dropped. All randomness comes from a
``numpy.random.Generator`` (PCG64) seeded from :class:`NoiseProfile`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .camera import CameraModel, DegenerateConfigurationError, estimate_homography, undistort
from .geometry import RigidTransform, compose, invert

MIN_SIDE_PX = 8.0
LM_MAX_ITER = 100
LM_LAMBDA0 = 1e-3
LM_STEP_TOL = 1e-10


class DegenerateObservationError(ValueError):
    pass


class PnPConvergenceError(ArithmeticError):
    pass


def marker_corners(side: float) -> np.ndarray:
    """Corners in the marker frame: top-left, top-right, bottom-right, bottom-left."""
    h = side / 2.0
    return np.array([[-h, h, 0.0], [h, h, 0.0], [h, -h, 0.0], [-h, -h, 0.0]])


@dataclass(frozen=True)
class MarkerSpec:
    id: int
    side: float
    pose_world: RigidTransform  # world <- marker

    def __post_init__(self):
        if not self.side > 0:
            raise ValueError("marker side must be positive")


@dataclass(frozen=True)
class MarkerObservation:
    id: int
    corners: np.ndarray  # (4, 2) pixels, corner order as marker_corners()
    timestamp: float

    def __post_init__(self):
        c = np.asarray(self.corners, dtype=float)
        if c.shape != (4, 2):
            raise ValueError("an observation needs exactly 4 corners")
        object.__setattr__(self, "corners", c)


@dataclass(frozen=True)
class PoseEstimate:
    transform: RigidTransform  # camera <- marker
    reprojection_rms: float
    timestamp: float
    marker_id: int = -1
    initial_rms: float = math.nan

    @property
    def distance(self) -> float:
        return float(np.linalg.norm(self.transform.translation))


@dataclass(frozen=True)
class NoiseProfile:
    pixel_sigma: float = 0.0
    dropout_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.pixel_sigma < 0:
            raise ValueError("pixel_sigma must be non-negative")
        if not 0.0 <= self.dropout_prob <= 1.0:
            raise ValueError("dropout_prob must lie in [0, 1]")

    def rng(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))


@dataclass(frozen=True)
class TrackerState:
    last_pose: Optional[PoseEstimate] = None
    age: float = 0.0


def _visible_corners(marker: MarkerSpec, cam_from_world: RigidTransform, cam: CameraModel):
    cam_from_marker = compose(cam_from_world, marker.pose_world)
    pc = marker_corners(marker.side) @ cam_from_marker.rotation.T + cam_from_marker.translation
    if np.any(pc[:, 2] <= 0.0):
        return None
    # marker +z must point back at the camera
    normal = cam_from_marker.rotation[:, 2]
    if float(normal @ -cam_from_marker.translation) <= 0.0:
        return None
    uv = kernels.project_points(pc, cam.intrinsics.vector, cam.distortion.vector)
    if not np.all(cam.in_sensor(uv)):
        return None
    sides = np.linalg.norm(uv - np.roll(uv, -1, axis=0), axis=1)
    if sides.min() < MIN_SIDE_PX:
        return None
    return uv


def observe_markers(
    markers: Sequence[MarkerSpec],
    camera_pose_world: RigidTransform,
    cam: CameraModel,
    noise: NoiseProfile,
    t: float,
    rng: Optional[np.random.Generator] = None,
) -> list[MarkerObservation]:
    """Corner observations of every visible marker.

    ``camera_pose_world`` is world <- camera. When ``rng`` is omitted a fresh
    generator is seeded from ``noise.seed``, making the call a pure function.
    """
    if rng is None:
        rng = noise.rng()
    cam_from_world = invert(camera_pose_world)
    out = []
    for m in markers:
        uv = _visible_corners(m, cam_from_world, cam)
        if uv is None:
            continue
        if noise.pixel_sigma > 0.0:
            uv = uv + rng.normal(0.0, noise.pixel_sigma, size=(4, 2))
        if noise.dropout_prob > 0.0 and rng.random() < noise.dropout_prob:
            continue
        out.append(MarkerObservation(m.id, uv, t))
    return out


def _check_corners(corners: np.ndarray) -> None:
    if not np.all(np.isfinite(corners)):
        raise DegenerateObservationError("non-finite corner")
    span = float(np.ptp(corners, axis=0).max())
    for i in range(4):
        for j in range(i + 1, 4):
            if np.linalg.norm(corners[i] - corners[j]) <= 1e-9 * max(span, 1.0):
                raise DegenerateObservationError(f"corners {i} and {j} coincide")
    for i in range(4):
        a, b, c = corners[i], corners[(i + 1) % 4], corners[(i + 2) % 4]
        d, e = b - a, c - a
        if abs(d[0] * e[1] - d[1] * e[0]) <= 1e-9 * span * span:
            raise DegenerateObservationError("three corners are collinear")


def _pose_from_homography(H: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h1, h2, h3 = H[:, 0], H[:, 1], H[:, 2]
    lam = 1.0 / math.sqrt(np.linalg.norm(h1) * np.linalg.norm(h2))
    if h3[2] < 0:
        lam = -lam
    r1, r2, t = lam * h1, lam * h2, lam * h3
    U, _, Vt = np.linalg.svd(np.column_stack((r1, r2, np.cross(r1, r2))))
    R = U @ Vt
    if np.linalg.det(R) < 0:
        R = U @ np.diag([1.0, 1.0, -1.0]) @ Vt
    return R, t


def _mirror_candidate(R: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # reflect the marker through the plane normal to the line of sight; the
    # image is unchanged to first order, which is the planar ambiguity
    v = t / np.linalg.norm(t)
    S = np.eye(3) - 2.0 * np.outer(v, v)
    return S @ R @ np.diag([1.0, 1.0, -1.0]), t.copy()


def _tilt(R: np.ndarray, t: np.ndarray) -> float:
    to_cam = -t / np.linalg.norm(t)
    return math.acos(max(-1.0, min(1.0, float(R[:, 2] @ to_cam))))


def _rms(R, t, obj, obs, cam) -> float:
    pc = obj @ R.T + t
    if np.any(pc[:, 2] <= 0):
        return math.inf
    uv = kernels.project_points(pc, cam.intrinsics.vector, cam.distortion.vector)
    return math.sqrt(float(((uv - obs) ** 2).sum()) / len(obj))


def solve_pnp(obs: MarkerObservation, side: float, cam: CameraModel) -> PoseEstimate:
    """Camera <- marker pose from the four corners of one marker.

    Homography decomposition on undistorted corners seeds two candidates (the
    planar two-fold ambiguity); both are refined by Levenberg-Marquardt on
    pixel reprojection error and the lower-error one wins, ties going to the
    smaller tilt.
    """
    corners = obs.corners
    _check_corners(corners)
    obj = marker_corners(side)
    norm = undistort(cam, corners)
    try:
        H = estimate_homography(obj[:, :2], norm)
    except DegenerateConfigurationError as exc:
        raise DegenerateObservationError(str(exc)) from exc
    R0, t0 = _pose_from_homography(H)
    init_rms = _rms(R0, t0, obj, corners, cam)

    best = None
    for Rc, tc in (_pose_from_homography(H), _mirror_candidate(R0, t0)):
        R, t, rms, _ = kernels.refine_pose(
            Rc, tc, obj, corners, cam.intrinsics.vector, cam.distortion.vector,
            LM_MAX_ITER, LM_LAMBDA0, LM_STEP_TOL,
        )
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t)) and math.isfinite(rms)) or t[2] <= 0:
            continue
        key = (rms, _tilt(R, t))
        if best is None or key[0] < best[0][0] - 1e-9 or (
            abs(key[0] - best[0][0]) <= 1e-9 and key[1] < best[0][1]
        ):
            best = (key, R, t)
    if best is None:
        raise PnPConvergenceError("no pose candidate converged")
    (rms, _), R, t = best
    return PoseEstimate(
        RigidTransform(R, t, "marker", "camera"), rms, obs.timestamp, obs.id, init_rms
    )


def select_nearest(estimates: Sequence[PoseEstimate]) -> Optional[PoseEstimate]:
    """Closest marker by Euclidean norm of the translation; ties -> lowest id."""
    if not estimates:
        return None
    return min(estimates, key=lambda e: (e.distance, e.marker_id))


def track(
    state: TrackerState, detection: Optional[PoseEstimate], dt: float, timeout: float
) -> tuple[TrackerState, Optional[PoseEstimate]]:
    if dt <= 0:
        raise ValueError("dt must be positive")
    if detection is not None:
        return TrackerState(detection, 0.0), detection
    age = state.age + dt
    new = replace(state, age=age)
    if state.last_pose is not None and age <= timeout:
        return new, state.last_pose
    return new, None


__all__ = [
    "DegenerateObservationError",
    "MarkerObservation",
    "MarkerSpec",
    "NoiseProfile",
    "PnPConvergenceError",
    "PoseEstimate",
    "TrackerState",
    "marker_corners",
    "observe_markers",
    "select_nearest",
    "solve_pnp",
    "track",
]
