"""Quadrotor plant behind a velocity-command interface, gates and courses.

Frames
------
world  : x, y horizontal, z up (mm); drone yaw is measured about world z.
body   : x forward, y left, z up.
camera : x right, y down, z along the optical axis (mounted looking forward).
gate   : x, y in the gate plane (y up), z the fly-through direction.
marker : x right, y up, z out of the marker face towards an approaching
         viewer, i.e. the gate frame turned half a turn about its y axis.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .geometry import RigidTransform, compose, invert, rot_z, transform_point, wrap_deg
from .perception import MarkerSpec

DRONE_RADIUS = 120.0
DEFAULT_OPENING = 500.0
DEFAULT_FRAME_BAND = 50.0
DEFAULT_MARKER_SIDE = 150.0

# body <- camera: camera z looks along body x, camera x is body -y, camera y is body -z
_BODY_FROM_CAMERA = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
# gate <- marker
_GATE_FROM_MARKER = np.diag([-1.0, 1.0, -1.0])


class CourseError(ValueError):
    pass


@dataclass(frozen=True)
class PlantParams:
    tau_v: float = 0.3
    tau_w: float = 0.15
    v_max: float = 1000.0
    w_max: float = 100.0
    dt: float = 0.005

    def __post_init__(self):
        for name in ("tau_v", "tau_w", "v_max", "w_max", "dt"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.dt > 0.01:
            raise ValueError("dt must not exceed 10 ms")


@dataclass(frozen=True)
class VelocityCommand:
    """Body-frame command; mm/s for the linear part, deg/s for yaw rate.

    Components are clamped to ``v_max``/``w_max`` on construction and the
    linear part is additionally scaled so its norm never exceeds ``v_max``.
    """

    vx: float = 0.0
    vy: float = 0.0
    vz: float = 0.0
    wz: float = 0.0
    v_max: float = field(default=1000.0, repr=False, compare=False)
    w_max: float = field(default=100.0, repr=False, compare=False)

    def __post_init__(self):
        v = [min(max(float(c), -self.v_max), self.v_max) for c in (self.vx, self.vy, self.vz)]
        n = math.sqrt(sum(c * c for c in v))
        if n > self.v_max:
            v = [c * (self.v_max / n) for c in v]
        object.__setattr__(self, "vx", v[0])
        object.__setattr__(self, "vy", v[1])
        object.__setattr__(self, "vz", v[2])
        object.__setattr__(self, "wz", min(max(float(self.wz), -self.w_max), self.w_max))

    @classmethod
    def hover(cls) -> VelocityCommand:
        return cls()

    def as_array(self) -> np.ndarray:
        return np.array([self.vx, self.vy, self.vz, self.wz])


@dataclass(frozen=True)
class DroneState:
    position: np.ndarray
    yaw: float = 0.0
    velocity_world: np.ndarray = field(default_factory=lambda: np.zeros(3))
    yaw_rate: float = 0.0
    t: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", np.array(self.position, dtype=float).reshape(3))
        object.__setattr__(self, "velocity_world", np.array(self.velocity_world, dtype=float).reshape(3))

    def as_array(self) -> np.ndarray:
        return np.array([*self.position, self.yaw, *self.velocity_world, self.yaw_rate])

    @classmethod
    def from_array(cls, a, t: float) -> DroneState:
        return cls(a[0:3], float(a[3]), a[4:7], float(a[7]), t)

    def body_pose(self) -> RigidTransform:
        """world <- body."""
        return RigidTransform(rot_z(math.radians(self.yaw)), self.position, "body", "world")

    def camera_pose(self) -> RigidTransform:
        """world <- camera."""
        return compose(self.body_pose(), camera_mount())


def camera_mount() -> RigidTransform:
    return RigidTransform(_BODY_FROM_CAMERA, np.zeros(3), "camera", "body")


def step(s: DroneState, cmd: VelocityCommand, p: PlantParams) -> DroneState:
    """One plant substep of length ``p.dt`` without disturbance."""
    return advance(s, cmd, p, 1)


def advance(
    s: DroneState,
    cmd: VelocityCommand,
    p: PlantParams,
    nsteps: int,
    disturbance: Optional["VelocityDisturbance"] = None,
) -> DroneState:
    if nsteps <= 0:
        return s
    if disturbance is None or disturbance.sigma <= 0.0:
        out, _ = kernels.integrate_plant(
            s.as_array(), np.zeros(2), cmd.as_array(), p.tau_v, p.tau_w, p.dt, nsteps,
            None, 0.0, 1.0, 1.0,
        )
    else:
        out = disturbance.integrate(s, cmd, p, nsteps)
    return DroneState.from_array(out, s.t + nsteps * p.dt)


@dataclass
class VelocityDisturbance:
    """Correlated error of the vehicle's own velocity tracking.

    Ornstein-Uhlenbeck noise on the horizontal achieved velocity. Its
    stationary standard deviation is ``sigma`` at ``v_ref`` ground speed and
    scales linearly with speed (a hovering vehicle holds still).
    """

    sigma: float
    rng: np.random.Generator
    tau: float = 1.0
    v_ref: float = 400.0
    state: np.ndarray = field(default_factory=lambda: np.zeros(2))

    def integrate(self, s: DroneState, cmd: VelocityCommand, p: PlantParams, nsteps: int) -> np.ndarray:
        draws = self.rng.standard_normal((nsteps, 2))
        out, self.state = kernels.integrate_plant(
            s.as_array(), self.state, cmd.as_array(), p.tau_v, p.tau_w, p.dt, nsteps,
            draws, self.sigma, self.tau, self.v_ref,
        )
        return out


# -- gates and courses --------------------------------------------------------


def gate_rotation(yaw_deg: float) -> np.ndarray:
    """world <- gate rotation for a vertical gate whose normal has heading ``yaw_deg``."""
    c, s = math.cos(math.radians(yaw_deg)), math.sin(math.radians(yaw_deg))
    return np.array([[-s, 0.0, c], [c, 0.0, s], [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class GateSpec:
    pose_world: RigidTransform  # world <- gate
    marker: MarkerSpec
    opening: float = DEFAULT_OPENING
    frame_band: float = DEFAULT_FRAME_BAND
    marker_offset: tuple[float, float] = (175.0, -175.0)

    @property
    def marker_from_gate(self) -> RigidTransform:
        return invert(gate_from_marker(self.marker_offset))


def gate_from_marker(offset: Sequence[float]) -> RigidTransform:
    return RigidTransform(_GATE_FROM_MARKER, [offset[0], offset[1], 0.0], "marker", "gate")


def default_marker_offset(opening: float, side: float) -> tuple[float, float]:
    """Marker inscribed in the lower corner of the opening at gate +x."""
    return (opening / 2 - side / 2, -opening / 2 + side / 2)


@dataclass(frozen=True)
class Course:
    gates: tuple[GateSpec, ...]
    start_position: np.ndarray
    start_yaw: float = 0.0

    def __post_init__(self):
        if len(self.gates) < 1:
            raise CourseError("a course needs at least one gate")
        ids = [g.marker.id for g in self.gates]
        if len(set(ids)) != len(ids):
            raise CourseError("marker ids must be unique within a course")

    @property
    def markers(self) -> list[MarkerSpec]:
        return [g.marker for g in self.gates]

    def marker_offsets(self) -> dict[int, tuple[float, float]]:
        return {g.marker.id: g.marker_offset for g in self.gates}

    def start_state(self) -> DroneState:
        return DroneState(self.start_position, self.start_yaw)


def make_gate(pos, yaw: float, marker_id: int, opening: float = DEFAULT_OPENING,
              marker_side: float = DEFAULT_MARKER_SIDE, marker_offset=None,
              frame_band: float = DEFAULT_FRAME_BAND) -> GateSpec:
    if not (opening > 0 and marker_side > 0 and frame_band > 0):
        raise CourseError("gate and marker sizes must be positive")
    if marker_offset is None:
        marker_offset = default_marker_offset(opening, marker_side)
    offset = (float(marker_offset[0]), float(marker_offset[1]))
    pose = RigidTransform(gate_rotation(yaw), pos, "gate", "world")
    marker_pose = compose(pose, gate_from_marker(offset))
    marker = MarkerSpec(int(marker_id), float(marker_side), marker_pose)
    return GateSpec(pose, marker, float(opening), float(frame_band), offset)


def load_course(document) -> Course:
    """Build a validated :class:`Course` from a dict, JSON text or a file path.

    Schema (mm, degrees)::

        {"start": {"pos": [x, y, z], "yaw": d},
         "gates": [{"pos": [x, y, z], "yaw": d, "opening": 500,
                    "marker_id": n, "marker_side": 150, "marker_offset": [gx, gy]}]}
    """
    if isinstance(document, (str, os.PathLike)):
        text = str(document)
        if not text.lstrip().startswith("{"):
            with open(document) as fh:
                text = fh.read()
        document = json.loads(text)
    if not isinstance(document, dict):
        raise CourseError("course document must be a JSON object")
    try:
        start = document.get("start", {"pos": [0, 0, 1000], "yaw": 0})
        start_pos = _vec3(start["pos"], "start.pos")
        start_yaw = float(start.get("yaw", 0.0))
        raw_gates = document["gates"]
    except (KeyError, TypeError) as exc:
        raise CourseError(f"malformed course document: {exc}") from exc
    if not isinstance(raw_gates, list) or not raw_gates:
        raise CourseError("'gates' must be a non-empty list")
    gates = []
    for i, g in enumerate(raw_gates):
        if not isinstance(g, dict):
            raise CourseError(f"gate {i} must be an object")
        try:
            gates.append(
                make_gate(
                    _vec3(g["pos"], f"gates[{i}].pos"),
                    float(g.get("yaw", 0.0)),
                    int(g["marker_id"]),
                    float(g.get("opening", DEFAULT_OPENING)),
                    float(g.get("marker_side", DEFAULT_MARKER_SIDE)),
                    g.get("marker_offset"),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, CourseError):
                raise
            raise CourseError(f"gate {i}: {exc}") from exc
    return Course(tuple(gates), start_pos, start_yaw)


def course_to_dict(course: Course) -> dict:
    gates = []
    for g in course.gates:
        z = g.pose_world.rotation[:, 2]
        gates.append(
            {
                "pos": [float(v) for v in g.pose_world.translation],
                "yaw": math.degrees(math.atan2(z[1], z[0])),
                "opening": g.opening,
                "marker_id": g.marker.id,
                "marker_side": g.marker.side,
                "marker_offset": list(g.marker_offset),
            }
        )
    return {
        "start": {"pos": [float(v) for v in course.start_position], "yaw": course.start_yaw},
        "gates": gates,
    }


def _vec3(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise CourseError(f"{name} must be three finite numbers")
    return a


def random_course(rng: np.random.Generator, n_gates: int = 3) -> Course:
    """A flyable course: each gate roughly faces the previous one's exit."""
    start = np.array([0.0, 0.0, 1000.0])
    heading = 0.0
    anchor = start.copy()
    gates = []
    for i in range(n_gates):
        dist = rng.uniform(2600.0, 3400.0) if i == 0 else rng.uniform(3000.0, 3800.0)
        lateral = rng.uniform(-450.0, 450.0)
        h = math.radians(heading)
        fwd = np.array([math.cos(h), math.sin(h), 0.0])
        left = np.array([-math.sin(h), math.cos(h), 0.0])
        pos = anchor + dist * fwd + lateral * left
        pos[2] = rng.uniform(1000.0, 1250.0)
        bearing = math.degrees(math.atan2(lateral, dist))
        yaw = wrap_deg(heading + bearing + rng.uniform(-10.0, 10.0))
        gates.append(make_gate(pos, yaw, marker_id=i + 1))
        anchor, heading = pos, yaw
    start_yaw = math.degrees(math.atan2(*(gates[0].pose_world.translation[1::-1] - start[1::-1])))
    start_yaw = wrap_deg(start_yaw + rng.uniform(-20.0, 20.0))
    return Course(tuple(gates), start, start_yaw)


# -- gate events --------------------------------------------------------------


@dataclass(frozen=True)
class GateEvent:
    kind: str  # "pass" | "collision"
    gate_index: int
    t: float
    point: tuple[float, float]  # crossing point in the gate plane


def distance_to_frame(x: float, y: float, half_opening: float, band: float) -> float:
    """Distance from an in-plane point to the square frame band."""
    m = max(abs(x), abs(y))
    if m < half_opening:
        return half_opening - m
    outer = half_opening + band
    if m <= outer:
        return 0.0
    return math.hypot(max(abs(x) - outer, 0.0), max(abs(y) - outer, 0.0))


def check_gate_events(prev: DroneState, nxt: DroneState, course: Course,
                      drone_radius: float = DRONE_RADIUS) -> list[GateEvent]:
    """Pass/collision events for segment ``prev -> nxt`` crossing a gate plane along +z.

    A crossing strictly inside the opening is a pass; a crossing within
    ``drone_radius`` of the frame band is a collision. Grazes are both.
    """
    events = []
    for i, g in enumerate(course.gates):
        inv = invert(g.pose_world)
        a = transform_point(inv, prev.position)
        b = transform_point(inv, nxt.position)
        if not (a[2] < 0.0 <= b[2]):
            continue
        f = -a[2] / (b[2] - a[2])
        x = float(a[0] + f * (b[0] - a[0]))
        y = float(a[1] + f * (b[1] - a[1]))
        t = float(prev.t + f * (nxt.t - prev.t))
        h = g.opening / 2.0
        if max(abs(x), abs(y)) < h:
            events.append(GateEvent("pass", i, t, (x, y)))
        if distance_to_frame(x, y, h, g.frame_band) <= drone_radius:
            events.append(GateEvent("collision", i, t, (x, y)))
    return events
