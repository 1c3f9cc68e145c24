"""Rigid-body math: rotation representations and frame-to-frame transforms.

Conventions
-----------
* Euler angles are intrinsic Z-Y-X: ``R = Rz(theta) @ Ry(psi) @ Rx(phi)``,
  with ``phi`` roll about x, ``psi`` pitch about y and ``theta`` yaw about z.
  Angles cross the API in degrees; everything internal is radians.
* A :class:`RigidTransform` labelled ``to_frame <- from_frame`` maps a point
  expressed in ``from_frame`` into ``to_frame``: ``p_to = R @ p_from + t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

ORTHO_TOL = 1e-9


class FrameMismatchError(ValueError):
    """Raised when composed transforms do not chain frame labels."""


class EulerAngles(NamedTuple):
    """Z-Y-X Euler angles in degrees."""

    phi: float
    psi: float
    theta: float


def wrap_deg(angle: float) -> float:
    """Wrap an angle in degrees into (-180, 180]."""
    a = math.fmod(angle, 360.0)
    if a <= -180.0:
        a += 360.0
    elif a > 180.0:
        a -= 360.0
    return a


def rot_x(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def is_rotation(R: np.ndarray, tol: float = ORTHO_TOL) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return bool(
        np.allclose(R.T @ R, np.eye(3), atol=tol, rtol=0.0)
        and abs(np.linalg.det(R) - 1.0) <= tol
    )


def euler_to_rotation(e: EulerAngles | tuple[float, float, float]) -> np.ndarray:
    phi, psi, theta = (math.radians(a) for a in e)
    return rot_z(theta) @ rot_y(psi) @ rot_x(phi)


def rotation_to_euler(R: np.ndarray) -> EulerAngles:
    """Recover Z-Y-X Euler angles (degrees) from a rotation matrix.

    At gimbal lock (``|psi| = 90``) roll is fixed to zero and the whole
    rotation about the vertical is attributed to ``theta``.
    """
    R = np.asarray(R, dtype=float)
    cos_psi = math.hypot(R[0, 0], R[1, 0])
    psi = math.atan2(-R[2, 0], cos_psi)
    if cos_psi > 1e-12:
        phi = math.atan2(R[2, 1], R[2, 2])
        theta = math.atan2(R[1, 0], R[0, 0])
    else:
        phi = 0.0
        # with phi = 0: R[0,1] = -sin(theta), R[1,1] = cos(theta)
        theta = math.atan2(-R[0, 1], R[1, 1])
    return EulerAngles(
        wrap_deg(math.degrees(phi)), math.degrees(psi), wrap_deg(math.degrees(theta))
    )


def skew(w: np.ndarray) -> np.ndarray:
    x, y, z = w
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rodrigues_to_rotation(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    theta = float(np.linalg.norm(r))
    K = skew(r)
    if theta < 1e-8:
        # second-order series; exact to double precision in this range
        return np.eye(3) + K + 0.5 * (K @ K)
    a = math.sin(theta) / theta
    b = (1.0 - math.cos(theta)) / (theta * theta)
    return np.eye(3) + a * K + b * (K @ K)


def rotation_to_rodrigues(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector with norm in [0, pi]."""
    R = np.asarray(R, dtype=float)
    v = 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    s = float(np.linalg.norm(v))
    c = 0.5 * (np.trace(R) - 1.0)
    theta = math.atan2(s, c)
    if theta < 1e-8:
        return v
    if theta < math.pi - 1e-3:
        return v * (theta / s)
    # near pi the antisymmetric part vanishes; sym(R) - cI = (1 - c) a a^T
    B = 0.5 * (R + R.T) - c * np.eye(3)
    i = int(np.argmax(np.diag(B)))
    axis = B[:, i] / np.linalg.norm(B[:, i])
    if float(axis @ v) < 0.0:
        axis = -axis
    return axis * theta


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation plus translation mapping ``from_frame`` points into ``to_frame``."""

    rotation: np.ndarray
    translation: np.ndarray
    from_frame: str = ""
    to_frame: str = ""

    def __post_init__(self) -> None:
        R = np.array(self.rotation, dtype=float)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not is_rotation(R, 1e-6):
            raise ValueError("rotation is not orthonormal with det +1")
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls, frame: str = "") -> RigidTransform:
        return cls(np.eye(3), np.zeros(3), frame, frame)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        return compose(self, other)

    def __repr__(self) -> str:
        return (
            f"RigidTransform({self.to_frame}<-{self.from_frame}, "
            f"rvec={rotation_to_rodrigues(self.rotation).round(6).tolist()}, "
            f"t={self.translation.round(6).tolist()})"
        )


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """``a o b``: first apply ``b``, then ``a``."""
    if a.from_frame != b.to_frame:
        raise FrameMismatchError(
            f"cannot compose {a.to_frame}<-{a.from_frame} with {b.to_frame}<-{b.from_frame}"
        )
    return RigidTransform(
        a.rotation @ b.rotation,
        a.rotation @ b.translation + a.translation,
        b.from_frame,
        a.to_frame,
    )


def invert(t: RigidTransform) -> RigidTransform:
    Rt = t.rotation.T
    return RigidTransform(Rt, -Rt @ t.translation, t.to_frame, t.from_frame)


def transform_point(t: RigidTransform, p) -> np.ndarray:
    """Map one point (shape (3,)) or many (shape (n, 3))."""
    p = np.asarray(p, dtype=float)
    return p @ t.rotation.T + t.translation


def angle_between(Ra: np.ndarray, Rb: np.ndarray) -> float:
    """Geodesic distance between two rotations, radians."""
    return float(np.linalg.norm(rotation_to_rodrigues(Ra.T @ Rb)))
