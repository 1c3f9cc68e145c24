"""Experiment runner: pose accuracy, closed-loop campaigns and live link runs.

Every run is a pure function of its configuration and seed. A campaign draws
one course from the seed and then one pair of independent streams per run
(detector noise and vehicle disturbance), so two strategies flown under the
same seed face identical courses and identical noise sources.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import link
from .camera import CameraModel, default_camera
from .controller import (
    ControlConfig,
    StrategyOneState,
    StrategyTwoState,
    step_strategy_one,
    step_strategy_two,
)
from .geometry import RigidTransform, rot_x, rot_z, rotation_to_euler, wrap_deg
from .perception import (
    DegenerateObservationError,
    MarkerSpec,
    NoiseProfile,
    PnPConvergenceError,
    TrackerState,
    observe_markers,
    select_nearest,
    solve_pnp,
    track,
)
from .vehicle import (
    DRONE_RADIUS,
    Course,
    DroneState,
    GateEvent,
    PlantParams,
    VelocityDisturbance,
    check_gate_events,
    load_course,
    random_course,
)

log = logging.getLogger(__name__)

SCENARIOS = ("pose_accuracy", "control_run", "live_link")
CSV_HEADER = ("t", "x", "y", "z", "yaw", "vx", "vy", "vz", "wz", "phase", "gate_idx", "event")


@dataclass(frozen=True)
class LightingProfile:
    name: str
    pixel_sigma: float  # px, corner noise
    dropout_prob: float  # per-marker, per-frame
    velocity_sigma: float  # mm/s, vehicle velocity-tracking error at 400 mm/s

    def noise(self, seed: int = 0) -> NoiseProfile:
        return NoiseProfile(self.pixel_sigma, self.dropout_prob, seed)


PROFILES = {
    "ideal": LightingProfile("ideal", 0.0, 0.0, 0.0),
    "desk": LightingProfile("desk", 0.5, 0.0, 0.0),
    "natural": LightingProfile("natural", 0.3, 0.01, 10.0),
    "artificial": LightingProfile("artificial", 0.6, 0.05, 60.0),
}


@dataclass(frozen=True)
class Thresholds:
    min_pass_rate: float = 0.9
    max_collision_rate: float = 0.1
    max_latency_ms: float = 40.0
    max_translation_mae: float = 40.0  # mm
    max_angle_mae: float = 5.0  # deg
    min_rate_hz: float = 25.0


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "control_run"
    course: Optional[str] = None  # course JSON path; None draws a random course from the seed
    strategy: int = 2
    profile: str = "natural"
    runs: int = 8
    seed: int = 0
    out_dir: Optional[str] = None
    n_gates: int = 3
    camera_rate: float = 30.0  # Hz
    time_cap: float = 120.0  # simulated s per run
    tracker_timeout: float = 0.3  # s, last-known-pose hold
    samples: int = 500  # pose-accuracy draws
    custom_profile: Optional[dict] = None
    control: ControlConfig = field(default_factory=ControlConfig)
    plant: PlantParams = field(default_factory=PlantParams)
    thresholds: Thresholds = field(default_factory=Thresholds)

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"scenario must be one of {SCENARIOS}")
        if self.strategy not in (1, 2):
            raise ValueError("strategy must be 1 or 2")
        if self.runs < 1:
            raise ValueError("runs must be at least 1")
        if self.samples < 1 or self.n_gates < 1:
            raise ValueError("samples and n_gates must be positive")
        if self.camera_rate <= 0 or self.time_cap <= 0 or self.tracker_timeout < 0:
            raise ValueError("rates and durations must be positive")
        if self.profile == "custom":
            if not self.custom_profile:
                raise ValueError("profile 'custom' needs custom_profile settings")
        elif self.profile not in PROFILES:
            raise ValueError(f"unknown profile {self.profile!r}; choose from {sorted(PROFILES)} or 'custom'")
        if self.course is not None and not Path(self.course).is_file():
            raise FileNotFoundError(f"course file {self.course!r} does not exist")

    @property
    def lighting(self) -> LightingProfile:
        if self.profile == "custom":
            c = self.custom_profile
            return LightingProfile("custom", float(c.get("pixel_sigma", 0.0)),
                                   float(c.get("dropout_prob", 0.0)), float(c.get("velocity_sigma", 0.0)))
        return PROFILES[self.profile]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["control"] = self.control.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        d = dict(d)
        if "control" in d:
            d["control"] = ControlConfig.from_dict(d["control"])
        if "plant" in d:
            d["plant"] = PlantParams(**d["plant"])
        if "thresholds" in d:
            d["thresholds"] = Thresholds(**d["thresholds"])
        return cls(**d)

    @classmethod
    def from_json_file(cls, path) -> ExperimentConfig:
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


# -- pose accuracy ------------------------------------------------------------------


@dataclass
class PoseAccuracyReport:
    samples: int
    translation_mae: dict  # mm per axis x, y, z
    euler_mae: dict  # deg per angle phi, psi, theta
    failures: int
    profile: str

    def to_dict(self) -> dict:
        return asdict(self)


def random_marker_pose(rng: np.random.Generator, cam: CameraModel, side: float = 150.0,
                       rng_range=(700.0, 1700.0), max_bearing=30.0, max_tilt=35.0,
                       max_tries: int = 1000) -> RigidTransform:
    """camera <- marker pose with the whole marker inside the image.

    Range and horizontal bearing are drawn uniformly, elevation within the
    vertical field of view; the marker normal is tilted away from the line of
    sight by up to ``max_tilt`` about a random in-plane axis and spun freely.
    """
    from .perception import _visible_corners  # visibility rules shared with the detector

    v_half = math.degrees(math.atan(cam.intrinsics.cy / cam.intrinsics.fy))
    for _ in range(max_tries):
        r = rng.uniform(*rng_range)
        bearing = math.radians(rng.uniform(-max_bearing, max_bearing))
        elev = math.radians(rng.uniform(-0.6 * v_half, 0.6 * v_half))
        t = r * np.array([math.sin(bearing) * math.cos(elev), math.sin(elev),
                          math.cos(bearing) * math.cos(elev)])
        # facing the camera (marker z along -t, marker y up), then tilt and spin
        z = -t / np.linalg.norm(t)
        x0 = np.cross([0.0, -1.0, 0.0], z)
        x0 /= np.linalg.norm(x0)
        facing = np.column_stack((x0, np.cross(z, x0), z))
        a = math.radians(rng.uniform(-180.0, 180.0))
        tilt = math.radians(rng.uniform(0.0, max_tilt))
        spin = math.radians(rng.uniform(-180.0, 180.0))
        R = facing @ rot_z(a) @ rot_x(tilt) @ rot_z(spin - a)
        pose = RigidTransform(R, t, "marker", "camera")
        world_from_marker = RigidTransform(R, t, "marker", "world")
        identity = RigidTransform(np.eye(3), np.zeros(3), "world", "camera")
        if _visible_corners(MarkerSpec(0, side, world_from_marker), identity, cam) is not None:
            return pose
    raise RuntimeError("could not draw a visible marker pose")


def run_pose_accuracy(cfg: ExperimentConfig, cam: Optional[CameraModel] = None,
                      side: float = 150.0) -> PoseAccuracyReport:
    cam = cam or default_camera()
    prof = cfg.lighting
    ss = np.random.SeedSequence(cfg.seed)
    pose_rng, noise_rng = (np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(2))
    noise = NoiseProfile(prof.pixel_sigma, 0.0, cfg.seed)  # dropped frames would only be redrawn
    world_from_cam = RigidTransform(np.eye(3), np.zeros(3), "camera", "world")
    t_err, a_err, failures = [], [], 0
    for i in range(cfg.samples):
        truth = random_marker_pose(pose_rng, cam, side)
        marker = MarkerSpec(0, side, RigidTransform(truth.rotation, truth.translation, "marker", "world"))
        obs = observe_markers([marker], world_from_cam, cam, noise, float(i), noise_rng)
        try:
            est = solve_pnp(obs[0], side, cam)
        except (IndexError, DegenerateObservationError, PnPConvergenceError):
            failures += 1
            continue
        t_err.append(np.abs(est.transform.translation - truth.translation))
        e_est = rotation_to_euler(est.transform.rotation)
        e_true = rotation_to_euler(truth.rotation)
        a_err.append([abs(wrap_deg(a - b)) for a, b in zip(e_est, e_true)])
    t_mae = np.mean(t_err, axis=0) if t_err else np.full(3, math.nan)
    a_mae = np.mean(a_err, axis=0) if a_err else np.full(3, math.nan)
    return PoseAccuracyReport(
        cfg.samples,
        dict(zip(("x", "y", "z"), map(float, t_mae))),
        dict(zip(("phi", "psi", "theta"), map(float, a_mae))),
        failures,
        prof.name,
    )


def pose_accuracy_ok(rep: PoseAccuracyReport, th: Thresholds) -> bool:
    return (rep.failures == 0
            and max(rep.translation_mae.values()) <= th.max_translation_mae
            and max(rep.euler_mae.values()) <= th.max_angle_mae)


# -- closed loop --------------------------------------------------------------------


class Pilot:
    """Perception and control for one vehicle: observe -> PnP -> track -> strategy.

    Produces the quantized Rc command for each camera tick.
    """

    def __init__(self, course: Course, strategy: int, control: ControlConfig, noise: NoiseProfile,
                 rng: np.random.Generator, cam: Optional[CameraModel] = None,
                 rate: float = 30.0, tracker_timeout: float = 0.3):
        self.course = course
        self.strategy = strategy
        self.control = control
        self.noise = noise
        self.rng = rng
        self.cam = cam or default_camera()
        self.dt = 1.0 / rate
        self.tracker_timeout = tracker_timeout
        self.markers = course.markers
        self.sides = {m.id: m.side for m in self.markers}
        self.offsets = course.marker_offsets()
        self.tracker = TrackerState()
        self.state = StrategyOneState() if strategy == 1 else StrategyTwoState()
        self._step: Callable = step_strategy_one if strategy == 1 else step_strategy_two

    @property
    def phase(self) -> int:
        return int(self.state.phase)

    def tick(self, s: DroneState) -> link.Rc:
        observations = observe_markers(self.markers, s.camera_pose(), self.cam, self.noise, s.t, self.rng)
        estimates = []
        for obs in observations:
            try:
                estimates.append(solve_pnp(obs, self.sides[obs.id], self.cam))
            except (DegenerateObservationError, PnPConvergenceError):
                continue
        self.tracker, pose = track(self.tracker, select_nearest(estimates), self.dt, self.tracker_timeout)
        cmd, self.state = self._step(self.state, pose, self.control, self.dt, self.offsets)
        return link.velocity_to_rc(cmd, self.control.v_max, self.control.w_max)


@dataclass
class RunReport:
    run: int
    strategy: int
    profile: str
    passes: list  # per gate
    collisions: list  # per gate
    lap_time: Optional[float]
    completed: bool
    events: list
    ticks: int
    sim_time: float
    latency_mean_ms: float
    latency_p95_ms: float
    achieved_rate_hz: Optional[float] = None
    trajectory: Optional[str] = None
    failure: Optional[str] = None

    def event_tuples(self) -> list[tuple]:
        return [(e["kind"], e["gate_index"], e["t"], tuple(e["point"])) for e in self.events]

    def to_dict(self) -> dict:
        return asdict(self)


def _fmt(v: float) -> str:
    return f"{v:.6f}"


class _InProcess:
    def __init__(self, plant: link.PlantLoop):
        self.plant = plant

    def send(self, rc: link.Rc) -> None:
        self.plant.mailbox.put(rc)

    def step(self) -> DroneState:
        return self.plant.advance_tick()


class _Loopback:
    def __init__(self, plant: link.PlantLoop, client: link.LinkClient):
        self.plant = plant
        self.client = client

    def send(self, rc: link.Rc) -> None:
        reply = self.client.send(rc)
        if reply != link.OK:
            raise link.LinkError(f"server rejected {link.encode_command(rc)!r}: {reply}")

    def step(self) -> DroneState:
        return self.plant.request_tick()


def run_streams(seed: int, runs: int) -> tuple[np.random.SeedSequence, list]:
    """Course stream and per-run ``(detector, vehicle)`` streams for a seed."""
    course_ss, *run_ss = np.random.SeedSequence(seed).spawn(1 + runs)
    return course_ss, [tuple(s.spawn(2)) for s in run_ss]


def campaign_course(cfg: ExperimentConfig) -> Course:
    if cfg.course is not None:
        return load_course(cfg.course)
    course_ss, _ = run_streams(cfg.seed, 1)
    return random_course(np.random.Generator(np.random.PCG64(course_ss)), cfg.n_gates)


def _fly(cfg: ExperimentConfig, course: Course, run: int, pilot: Pilot, transport,
         csv_out: Optional[io.TextIOBase], pace: bool = False) -> RunReport:
    n = len(course.gates)
    passes, collisions = [False] * n, [False] * n
    events: list[GateEvent] = []
    latencies = []
    lap_time, failure = None, None
    writer = csv.writer(csv_out, lineterminator="\n") if csv_out is not None else None
    if writer:
        writer.writerow(CSV_HEADER)
    s = transport.plant.snapshot()
    next_gate, k = 0, 0
    period = 1.0 / cfg.camera_rate
    wall0 = time.perf_counter()
    done = False
    while not done:
        if s.t >= cfg.time_cap - 1e-9:
            failure = f"time cap of {cfg.time_cap:g} s reached"
            break
        t0 = time.perf_counter()
        rc = pilot.tick(s)
        latencies.append(time.perf_counter() - t0)
        transport.send(rc)
        nxt = transport.step()
        seg = check_gate_events(s, nxt, course, DRONE_RADIUS)
        for e in seg:
            events.append(e)
            if e.kind == "pass":
                passes[e.gate_index] = True
            else:
                collisions[e.gate_index] = True
            if e.gate_index == n - 1:
                done = True
                if e.kind == "pass":
                    lap_time = float(e.t)
        if writer:
            tag = "|".join(f"{e.kind}:{e.gate_index}" for e in seg)
            v = s.velocity_world
            writer.writerow([_fmt(s.t), _fmt(s.position[0]), _fmt(s.position[1]), _fmt(s.position[2]),
                             _fmt(s.yaw), _fmt(v[0]), _fmt(v[1]), _fmt(v[2]), _fmt(s.yaw_rate),
                             pilot.phase, next_gate, tag])
        for e in seg:
            if e.kind == "pass" and e.gate_index >= next_gate:
                next_gate = e.gate_index + 1
        s = nxt
        k += 1
        if pace:
            delay = wall0 + k * period - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
    wall = time.perf_counter() - wall0
    if failure is None and lap_time is None:
        failure = "final gate not passed"
    lat = np.array(latencies) * 1000.0 if latencies else np.zeros(1)
    return RunReport(
        run=run,
        strategy=pilot.strategy,
        profile=cfg.lighting.name,
        passes=passes,
        collisions=collisions,
        lap_time=lap_time,
        completed=lap_time is not None,
        events=[{"kind": e.kind, "gate_index": e.gate_index, "t": float(e.t),
                 "point": [float(c) for c in e.point]} for e in events],
        ticks=k,
        sim_time=s.t,
        latency_mean_ms=float(lat.mean()),
        latency_p95_ms=float(np.percentile(lat, 95)),
        achieved_rate_hz=k / wall if wall > 0 else None,
        failure=failure,
    )


def _setup(cfg: ExperimentConfig, course: Course, run: int):
    _, streams = run_streams(cfg.seed, run + 1)
    det_ss, veh_ss = streams[run]
    prof = cfg.lighting
    pilot = Pilot(course, cfg.strategy, cfg.control, prof.noise(cfg.seed),
                  np.random.Generator(np.random.PCG64(det_ss)), rate=cfg.camera_rate,
                  tracker_timeout=cfg.tracker_timeout)
    disturbance = VelocityDisturbance(prof.velocity_sigma, np.random.Generator(np.random.PCG64(veh_ss)))
    plant = link.PlantLoop(course.start_state(), cfg.plant, disturbance, cfg.camera_rate)
    return pilot, plant


def simulate_run(cfg: ExperimentConfig, course: Course, run: int = 0,
                 csv_out: Optional[io.TextIOBase] = None) -> RunReport:
    """One in-process, single-threaded closed-loop run."""
    pilot, plant = _setup(cfg, course, run)
    return _fly(cfg, course, run, pilot, _InProcess(plant), csv_out)


@dataclass
class CampaignReport:
    strategy: int
    profile: str
    seed: int
    runs: list  # RunReport
    gates: int

    @property
    def pass_count(self) -> int:
        return sum(sum(r.passes) for r in self.runs)

    @property
    def collision_count(self) -> int:
        return sum(sum(r.collisions) for r in self.runs)

    @property
    def pass_rate(self) -> float:
        return self.pass_count / (self.gates * len(self.runs))

    @property
    def collision_rate(self) -> float:
        return self.collision_count / (self.gates * len(self.runs))

    @property
    def lap_times(self) -> list[float]:
        return [r.lap_time for r in self.runs if r.lap_time is not None]

    @property
    def mean_lap_time(self) -> Optional[float]:
        laps = self.lap_times
        return float(np.mean(laps)) if laps else None

    @property
    def latency_mean_ms(self) -> float:
        w = np.array([r.ticks for r in self.runs], dtype=float)
        return float(np.average([r.latency_mean_ms for r in self.runs], weights=w))

    @property
    def latency_p95_ms(self) -> float:
        return float(max(r.latency_p95_ms for r in self.runs))

    def summary(self) -> dict:
        """Per-run rows and overall pass/collision counts."""
        rows = [
            {"no": r.run + 1, "passes": sum(r.passes), "collisions": sum(r.collisions),
             "gates": self.gates, "lap_time": r.lap_time, "failure": r.failure}
            for r in self.runs
        ]
        return {
            "strategy": self.strategy,
            "profile": self.profile,
            "seed": self.seed,
            "rows": rows,
            "overall": {
                "passes": self.pass_count,
                "collisions": self.collision_count,
                "attempts": self.gates * len(self.runs),
                "pass_rate": self.pass_rate,
                "collision_rate": self.collision_rate,
                "mean_lap_time": self.mean_lap_time,
            },
            "latency_ms": {"mean": self.latency_mean_ms, "p95": self.latency_p95_ms},
        }

    def ok(self, th: Thresholds) -> bool:
        return (self.pass_rate >= th.min_pass_rate and self.collision_rate <= th.max_collision_rate
                and self.latency_mean_ms < th.max_latency_ms)


def run_control_campaign(cfg: ExperimentConfig, course: Optional[Course] = None) -> CampaignReport:
    course = course or campaign_course(cfg)
    out = Path(cfg.out_dir) if cfg.out_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    reports = []
    for i in range(cfg.runs):
        buf = io.StringIO() if out else None
        rep = simulate_run(cfg, course, i, buf)
        if out:
            path = out / f"run_s{cfg.strategy}_{cfg.lighting.name}_{i:03d}.csv"
            path.write_text(buf.getvalue())
            rep.trajectory = str(path)
        log.info("run %d: passes %s collisions %s lap %s", i, rep.passes, rep.collisions, rep.lap_time)
        reports.append(rep)
    camp = CampaignReport(cfg.strategy, cfg.lighting.name, cfg.seed, reports, len(course.gates))
    if out:
        with open(out / f"summary_s{cfg.strategy}_{cfg.lighting.name}.json", "w") as fh:
            json.dump(camp.summary(), fh, indent=2)
    return camp


# -- live link ----------------------------------------------------------------------


def run_live(cfg: ExperimentConfig, course: Optional[Course] = None, *, port: int = 0,
             telemetry_port: int = 0, pace: bool = False, timeout: float = link.DEFAULT_TIMEOUT,
             csv_out: Optional[io.TextIOBase] = None) -> RunReport:
    """Run 0 of the campaign with commands travelling over the UDP loopback link.

    The plant loop, the link server and this controller run in three
    executors. Ticks are aligned (the plant integrates one camera period per
    accepted command), so with a lossless link the run reproduces the
    in-process one exactly. ``pace`` throttles the loop to the camera rate.
    """
    course = course or campaign_course(cfg)
    pilot, plant = _setup(cfg, course, 0)
    plant.start()
    server = None
    try:
        server = link.LinkServer(plant, port=port, telemetry_port=telemetry_port or link.TELEMETRY_PORT).start()
        host, bound = server.address
        with link.LinkClient(host, bound, timeout=timeout) as client:
            for m in (link.EnterSdk(), link.Takeoff()):
                if client.send(m) != link.OK:
                    raise link.LinkError(f"server refused {link.encode_command(m)!r}")
            rep = _fly(cfg, course, 0, pilot, _Loopback(plant, client), csv_out, pace=pace)
            client.send(link.Land())
        return rep
    finally:
        if server is not None:
            server.stop()
        plant.stop()


def _telemetry_state(m: link.TelemetryMessage) -> DroneState:
    return DroneState(m.position, m.yaw, m.velocity, 0.0, m.time_ms / 1000.0)


def run_live_external(cfg: ExperimentConfig, course: Optional[Course] = None, *,
                      host: str = "127.0.0.1", port: int = link.COMMAND_PORT,
                      telemetry_port: int = link.TELEMETRY_PORT,
                      timeout: float = link.DEFAULT_TIMEOUT) -> RunReport:
    """Fly against a separately started server (see :func:`serve`).

    The camera is still synthesized here, from the vehicle pose carried by
    the 10 Hz telemetry stream, so observations lag the plant by up to one
    telemetry period. No determinism is promised in this mode.
    """
    course = course or campaign_course(cfg)
    _, streams = run_streams(cfg.seed, 1)
    prof = cfg.lighting
    pilot = Pilot(course, cfg.strategy, cfg.control, prof.noise(cfg.seed),
                  np.random.Generator(np.random.PCG64(streams[0][0])), rate=cfg.camera_rate,
                  tracker_timeout=cfg.tracker_timeout)
    n = len(course.gates)
    passes, collisions, events, latencies = [False] * n, [False] * n, [], []
    lap_time, failure = None, None
    period = 1.0 / cfg.camera_rate
    with link.LinkClient(host, port, timeout=timeout, telemetry_port=telemetry_port) as client:
        for m in (link.EnterSdk(), link.Takeoff()):
            reply = client.send(m)
            if reply != link.OK:
                raise link.LinkError(f"server refused {link.encode_command(m)!r}: {reply}")
        s = _telemetry_state(client.telemetry())
        t_first = s.t
        wall0 = time.perf_counter()
        k = 0
        while lap_time is None and failure is None:
            latest = client.latest_telemetry()
            if latest is not None:
                nxt = _telemetry_state(latest)
                for e in check_gate_events(s, nxt, course, DRONE_RADIUS):
                    events.append(e)
                    (passes if e.kind == "pass" else collisions)[e.gate_index] = True
                    if e.gate_index == n - 1:
                        if e.kind == "pass":
                            lap_time = float(e.t - t_first)
                        else:
                            failure = "collided with the final gate"
                s = nxt
            if s.t - t_first >= cfg.time_cap:
                failure = f"time cap of {cfg.time_cap:g} s reached"
            t0 = time.perf_counter()
            # controller clock: telemetry arrives slower than the camera ticks
            rc = pilot.tick(replace(s, t=t_first + k * period))
            latencies.append(time.perf_counter() - t0)
            client.send(rc)
            k += 1
            delay = wall0 + k * period - time.perf_counter()
            if delay > 0:
                time.sleep(delay)
        client.send(link.Land())
        wall = time.perf_counter() - wall0
    lat = np.array(latencies) * 1000.0
    return RunReport(0, cfg.strategy, prof.name, passes, collisions, lap_time, lap_time is not None,
                     [{"kind": e.kind, "gate_index": e.gate_index, "t": float(e.t),
                       "point": [float(c) for c in e.point]} for e in events],
                     k, s.t - t_first, float(lat.mean()), float(np.percentile(lat, 95)),
                     k / wall if wall > 0 else None, None, failure)


def probe_server(host: str, port: int, timeout: float = link.DEFAULT_TIMEOUT) -> str:
    """Enter SDK mode on a running server; raises :class:`link.LinkTimeout` when absent."""
    with link.LinkClient(host, port, timeout=timeout) as client:
        return client.send(link.EnterSdk())


def serve(cfg: ExperimentConfig, course: Optional[Course] = None, *, host: str = "127.0.0.1",
          port: int = link.COMMAND_PORT, telemetry_port: int = link.TELEMETRY_PORT,
          duration: Optional[float] = None) -> None:
    """Realtime plant behind the UDP link until interrupted or ``duration`` elapses."""
    course = course or campaign_course(cfg)
    _, plant = _setup(cfg, course, 0)
    plant.start_realtime()
    server = link.LinkServer(plant, host, port, telemetry_port).start()
    log.info("serving on %s:%d, telemetry to port %d", host, port, telemetry_port)
    try:
        if duration is None:
            while True:
                time.sleep(1.0)
        else:
            time.sleep(duration)
    except KeyboardInterrupt:
        pass
    finally:
        server.stop()
        plant.stop()


__all__ = [
    "CSV_HEADER",
    "CampaignReport",
    "ExperimentConfig",
    "LightingProfile",
    "PROFILES",
    "Pilot",
    "PoseAccuracyReport",
    "RunReport",
    "Thresholds",
    "campaign_course",
    "pose_accuracy_ok",
    "probe_server",
    "random_marker_pose",
    "run_control_campaign",
    "run_live",
    "run_live_external",
    "run_pose_accuracy",
    "serve",
    "simulate_run",
]
