"""Two vision-only gate-passing strategies as finite-state machines.

Both consume the camera <- marker pose of the nearest tracked marker and emit
body-frame :class:`~gaterace.vehicle.VelocityCommand` values through saturated
proportional laws. They are gate-agnostic: the marker being approached is
locked by id once the approach starts and released after the fly-through.

Strategy one works in the drone's own frame (rotate to the marker, fly at it,
square up to the gate plane, slide onto the gate axis, fly through blind).
Strategy two works in gate coordinates (converge on a standoff point on the
gate axis, approach the centre while correcting, fly through blind).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import IntEnum
from typing import Mapping, Optional

import numpy as np

from .geometry import RigidTransform, compose, invert, transform_point
from .perception import PoseEstimate
from .vehicle import VelocityCommand, camera_mount, gate_from_marker

EPS_T = 1e-9


@dataclass(frozen=True)
class Gains:
    kp_yaw: float = 0.8  # (deg/s)/deg
    kp_x: float = 0.8  # (mm/s)/mm
    kp_y: float = 0.8
    kp_z: float = 0.8
    limit_x: float = 600.0  # mm/s
    limit_y: float = 600.0
    limit_z: float = 400.0
    limit_yaw: float = 80.0  # deg/s

    def __post_init__(self):
        if min(self.kp_yaw, self.kp_x, self.kp_y, self.kp_z) < 0:
            raise ValueError("gains must be non-negative")
        if min(self.limit_x, self.limit_y, self.limit_z, self.limit_yaw) <= 0:
            raise ValueError("output limits must be positive")


@dataclass(frozen=True)
class ControlConfig:
    alpha1: float = math.atan(0.2)  # rad, marker-bearing threshold to start the approach
    d2: float = 800.0  # mm, approach stop distance (strategy one)
    t5: float = 5.0  # s, blind fly-through (strategy one)
    d1: float = 900.0  # mm, standoff distance on the gate axis (strategy two)
    delta2: float = 150.0  # mm, symmetry-plane distance that starts the final approach
    dt2: float = 0.3  # s, marker loss that starts the fly-through (strategy two)
    t3: float = 2.0  # s, blind fly-through (strategy two)
    lateral_tol: float = 50.0  # mm, axis capture band (strategy one, phase 4)
    face_tol: float = 3.0  # deg, gate-plane facing tolerance (strategy one, phase 3)
    gains: Gains = field(default_factory=Gains)
    cruise_speed: float = 400.0  # mm/s
    fly_through_speed: float = 400.0  # mm/s
    search_rate: float = 0.0  # deg/s yaw while no marker is seen in phase 1
    marker_offset: tuple[float, float] = (175.0, -175.0)  # marker centre in gate x/y
    v_max: float = 1000.0
    w_max: float = 100.0

    def __post_init__(self):
        for name in ("alpha1", "d2", "t5", "d1", "delta2", "dt2", "t3", "lateral_tol",
                     "face_tol", "cruise_speed", "fly_through_speed"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.alpha1 >= math.pi / 2:
            raise ValueError("alpha1 must be below pi/2")
        g = self.gains
        if max(g.limit_x, g.limit_y, g.limit_z) > self.v_max or g.limit_yaw > self.w_max:
            raise ValueError("gain output limits exceed plant saturation")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["marker_offset"] = list(self.marker_offset)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> ControlConfig:
        d = dict(d)
        if "gains" in d:
            d["gains"] = Gains(**d["gains"])
        if "marker_offset" in d:
            d["marker_offset"] = tuple(d["marker_offset"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> ControlConfig:
        return cls.from_dict(json.loads(text))

    def command(self, vx=0.0, vy=0.0, vz=0.0, wz=0.0) -> VelocityCommand:
        return VelocityCommand(vx, vy, vz, wz, v_max=self.v_max, w_max=self.w_max)


def p_control(error: float, kp: float, limit: float) -> float:
    if limit <= 0:
        raise ValueError("limit must be positive")
    return min(max(kp * error, -limit), limit)


# -- geometry shared by both strategies ---------------------------------------


def body_from_gate(pose: PoseEstimate, offset=(175.0, -175.0)) -> RigidTransform:
    cam_from_gate = compose(pose.transform, invert(gate_from_marker(offset)))
    return compose(camera_mount(), cam_from_gate)


def target_to_body(pose: PoseEstimate, target_in_gate, offset=(175.0, -175.0)) -> np.ndarray:
    """Vector from the drone to a gate-frame target, expressed in the body frame."""
    return transform_point(body_from_gate(pose, offset), np.asarray(target_in_gate, dtype=float))


def drone_in_gate(pose: PoseEstimate, offset=(175.0, -175.0)) -> np.ndarray:
    """Drone (body origin) position in the gate frame."""
    return invert(body_from_gate(pose, offset)).translation


def yaw_to_gate_normal(pose: PoseEstimate, offset=(175.0, -175.0)) -> float:
    """Signed yaw (deg, + = turn left) that points body x along the fly-through direction."""
    n = body_from_gate(pose, offset).rotation[:, 2]
    return math.degrees(math.atan2(n[1], n[0]))


def marker_bearing(pose: PoseEstimate) -> float:
    """Horizontal angle (deg) from the image centre to the marker centre, + = right."""
    t = pose.transform.translation
    return math.degrees(math.atan2(t[0], t[2]))


def _offset(pose: PoseEstimate, cfg: ControlConfig, offsets: Optional[Mapping]) -> tuple:
    if offsets is not None and pose.marker_id in offsets:
        return offsets[pose.marker_id]
    return cfg.marker_offset


def _altitude(pose: PoseEstimate, off, cfg: ControlConfig) -> float:
    p = drone_in_gate(pose, off)
    e = target_to_body(pose, (p[0], 0.0, p[2]), off)
    return p_control(e[2], cfg.gains.kp_z, cfg.gains.limit_z)


# -- strategy one ---------------------------------------------------------------


class PhaseOne(IntEnum):
    ROTATE = 1
    APPROACH = 2
    FACE_PLANE = 3
    ALIGN_LATERAL = 4
    FLY_THROUGH = 5


@dataclass(frozen=True)
class StrategyOneState:
    phase: PhaseOne = PhaseOne.ROTATE
    phase5_elapsed: float = 0.0
    target_id: Optional[int] = None


def step_strategy_one(
    s: StrategyOneState,
    pose: Optional[PoseEstimate],
    cfg: ControlConfig,
    dt: float,
    offsets: Optional[Mapping[int, tuple]] = None,
) -> tuple[VelocityCommand, StrategyOneState]:
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = cfg.gains

    if s.phase == PhaseOne.FLY_THROUGH:
        # phase5_elapsed is the blind-flight time already commanded
        if s.phase5_elapsed < cfg.t5 - EPS_T:
            return cfg.command(vx=cfg.fly_through_speed), replace(s, phase5_elapsed=s.phase5_elapsed + dt)
        s = StrategyOneState()

    if s.phase == PhaseOne.ROTATE:
        if pose is None:
            return cfg.command(wz=cfg.search_rate), s
        bearing = marker_bearing(pose)
        if abs(bearing) >= math.degrees(cfg.alpha1):
            off = _offset(pose, cfg, offsets)
            return cfg.command(
                vz=_altitude(pose, off, cfg), wz=p_control(-bearing, g.kp_yaw, g.limit_yaw)
            ), s
        s = StrategyOneState(PhaseOne.APPROACH, 0.0, pose.marker_id)

    # phases 2-4 need the locked marker; otherwise hold
    if pose is None or pose.marker_id != s.target_id:
        return cfg.command(), s
    off = _offset(pose, cfg, offsets)
    vz = _altitude(pose, off, cfg)
    p_gate = drone_in_gate(pose, off)

    if s.phase == PhaseOne.APPROACH:
        if -p_gate[2] > cfg.d2:
            bearing = marker_bearing(pose)
            return cfg.command(
                vx=cfg.cruise_speed, vz=vz, wz=p_control(-bearing, g.kp_yaw, g.limit_yaw)
            ), s
        s = replace(s, phase=PhaseOne.FACE_PLANE)

    yaw_err = yaw_to_gate_normal(pose, off)
    if s.phase == PhaseOne.FACE_PLANE:
        if abs(yaw_err) >= cfg.face_tol:
            return cfg.command(vz=vz, wz=p_control(yaw_err, g.kp_yaw, g.limit_yaw)), s
        s = replace(s, phase=PhaseOne.ALIGN_LATERAL)

    if s.phase == PhaseOne.ALIGN_LATERAL:
        if abs(p_gate[0]) >= cfg.lateral_tol:
            e = target_to_body(pose, (0.0, 0.0, p_gate[2]), off)
            return cfg.command(
                vy=p_control(e[1], g.kp_y, g.limit_y),
                vz=vz,
                wz=p_control(yaw_err, g.kp_yaw, g.limit_yaw),
            ), s
        s = replace(s, phase=PhaseOne.FLY_THROUGH, phase5_elapsed=dt)
        return cfg.command(vx=cfg.fly_through_speed), s

    raise AssertionError(f"unreachable phase {s.phase}")


# -- strategy two ---------------------------------------------------------------


class PhaseTwo(IntEnum):
    STANDOFF = 1
    GATE_APPROACH = 2
    FLY_THROUGH = 3


@dataclass(frozen=True)
class StrategyTwoState:
    phase: PhaseTwo = PhaseTwo.STANDOFF
    marker_lost: float = 0.0
    phase3_elapsed: float = 0.0
    target_id: Optional[int] = None
    last_stamp: float = -math.inf


def step_strategy_two(
    s: StrategyTwoState,
    pose: Optional[PoseEstimate],
    cfg: ControlConfig,
    dt: float,
    offsets: Optional[Mapping[int, tuple]] = None,
) -> tuple[VelocityCommand, StrategyTwoState]:
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = cfg.gains

    if s.phase == PhaseTwo.FLY_THROUGH:
        if s.phase3_elapsed < cfg.t3 - EPS_T:
            return cfg.command(vx=cfg.fly_through_speed), replace(s, phase3_elapsed=s.phase3_elapsed + dt)
        s = StrategyTwoState()

    if s.phase == PhaseTwo.STANDOFF:
        if pose is None:
            return cfg.command(wz=cfg.search_rate), s
        off = _offset(pose, cfg, offsets)
        p_gate = drone_in_gate(pose, off)
        s = replace(s, marker_lost=0.0, last_stamp=pose.timestamp)
        if abs(p_gate[0]) > cfg.delta2:
            e = target_to_body(pose, (0.0, 0.0, -cfg.d1), off)
            c = body_from_gate(pose, off).translation
            return cfg.command(
                vx=p_control(e[0], g.kp_x, g.limit_x),
                vy=p_control(e[1], g.kp_y, g.limit_y),
                vz=p_control(e[2], g.kp_z, g.limit_z),
                wz=p_control(math.degrees(math.atan2(c[1], c[0])), g.kp_yaw, g.limit_yaw),
            ), s
        s = replace(s, phase=PhaseTwo.GATE_APPROACH, target_id=pose.marker_id)
    else:
        # a detection counts once: stale poses replayed by the tracker do not reset the clock
        locked = pose is not None and pose.marker_id == s.target_id
        if locked and pose.timestamp > s.last_stamp:
            s = replace(s, marker_lost=0.0, last_stamp=pose.timestamp)
        else:
            s = replace(s, marker_lost=s.marker_lost + dt)

    if s.marker_lost > cfg.dt2 + EPS_T:
        return cfg.command(vx=cfg.fly_through_speed), StrategyTwoState(
            PhaseTwo.FLY_THROUGH, 0.0, dt, s.target_id, s.last_stamp
        )
    if pose is None or pose.marker_id != s.target_id:
        return cfg.command(vx=cfg.cruise_speed), s
    off = _offset(pose, cfg, offsets)
    e = target_to_body(pose, (0.0, 0.0, 0.0), off)
    return cfg.command(
        # forward bias: never slower than cruise, faster while the gate is far
        vx=max(cfg.cruise_speed, p_control(e[0], g.kp_x, g.limit_x)),
        vy=p_control(e[1], g.kp_y, g.limit_y),
        vz=p_control(e[2], g.kp_z, g.limit_z),
        wz=p_control(yaw_to_gate_normal(pose, off), g.kp_yaw, g.limit_yaw),
    ), s


__all__ = [
    "ControlConfig",
    "Gains",
    "PhaseOne",
    "PhaseTwo",
    "StrategyOneState",
    "StrategyTwoState",
    "body_from_gate",
    "drone_in_gate",
    "marker_bearing",
    "p_control",
    "step_strategy_one",
    "step_strategy_two",
    "target_to_body",
    "yaw_to_gate_normal",
]
