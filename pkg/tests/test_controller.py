import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gaterace.camera import default_camera
from gaterace.controller import (
    ControlConfig,
    Gains,
    PhaseOne,
    PhaseTwo,
    StrategyOneState,
    StrategyTwoState,
    drone_in_gate,
    marker_bearing,
    p_control,
    step_strategy_one,
    step_strategy_two,
    target_to_body,
    yaw_to_gate_normal,
)
from gaterace.geometry import compose, invert
from gaterace.harness import Pilot
from gaterace.link import PlantLoop, rc_to_velocity
from gaterace.perception import NoiseProfile, PoseEstimate, observe_markers
from gaterace.vehicle import Course, DroneState, make_gate

CFG = ControlConfig()
DT = 1 / 30
GATE = make_gate([0.0, 0.0, 1000.0], 0.0, 4)  # fly-through along world +x
COURSE = Course((GATE,), np.array([-2000.0, 0.0, 1000.0]), 0.0)


def state_at(gate_xyz, yaw_vs_normal=0.0):
    """Drone at a gate-frame position, yawed (deg, + = left) from the fly-through direction."""
    from gaterace.geometry import transform_point

    p = transform_point(GATE.pose_world, np.asarray(gate_xyz, float))
    return DroneState(p, yaw_vs_normal)


def pose_of(s, stamp=0.0):
    cam_from_marker = compose(invert(s.camera_pose()), GATE.marker.pose_world)
    return PoseEstimate(cam_from_marker, 0.0, stamp, GATE.marker.id)


def pose_at(gate_xyz, yaw=0.0, stamp=0.0):
    return pose_of(state_at(gate_xyz, yaw), stamp)


class TestConfig:
    def test_defaults(self):
        assert CFG.alpha1 == pytest.approx(math.atan(0.2))
        assert math.degrees(CFG.alpha1) == pytest.approx(11.31, abs=0.01)
        assert (CFG.d2, CFG.t5, CFG.d1, CFG.delta2, CFG.dt2, CFG.t3) == (800, 5, 900, 150, 0.3, 2)

    def test_json_round_trip(self):
        cfg = replace(CFG, gains=Gains(kp_yaw=1.1), lateral_tol=40.0)
        assert ControlConfig.from_json(cfg.to_json()) == cfg

    @pytest.mark.parametrize("bad", [{"d1": 0}, {"alpha1": 2.0}, {"gains": Gains(limit_x=5000)}])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            replace(CFG, **bad)


class TestPControl:
    def test_examples(self):
        assert p_control(0.0, 0.8, 100) == 0.0
        assert p_control(100.0, 0.5, 1000) == 50.0
        assert p_control(5000.0, 1.0, 400) == 400.0
        assert p_control(-5000.0, 1.0, 400) == -400.0

    def test_limit_must_be_positive(self):
        with pytest.raises(ValueError):
            p_control(1.0, 1.0, 0.0)


class TestGeometry:
    def test_at_standoff(self):
        e = target_to_body(pose_at([0, 0, -900]), (0, 0, -900))
        np.testing.assert_allclose(e, 0.0, atol=1e-9)

    def test_left_of_axis(self):
        # gate x is the approaching drone's left
        e = target_to_body(pose_at([300, 0, -900]), (0, 0, -900))
        np.testing.assert_allclose(e, [0, -300, 0], atol=1e-9)

    def test_yawed_preserves_norm(self):
        straight = target_to_body(pose_at([300, 100, -1500]), (0, 0, -900))
        yawed = target_to_body(pose_at([300, 100, -1500], yaw=90.0), (0, 0, -900))
        assert np.linalg.norm(yawed) == pytest.approx(np.linalg.norm(straight))
        # turned left by 90 deg: what was ahead is now on the right
        np.testing.assert_allclose(yawed, [straight[1], -straight[0], straight[2]], atol=1e-9)

    def test_drone_position_and_heading(self):
        pose = pose_at([120, -40, -1300], yaw=-12.0)
        np.testing.assert_allclose(drone_in_gate(pose), [120, -40, -1300], atol=1e-9)
        assert yaw_to_gate_normal(pose) == pytest.approx(12.0)

    def test_bearing_sign(self):
        # marker is at gate +x/-y, i.e. left of and below the axis seen from the approach
        assert marker_bearing(pose_at([0, 0, -2000])) < 0
        assert marker_bearing(pose_at([0, 0, -2000], yaw=20.0)) > 0


class TestStrategyOne:
    def test_rotate_towards_marker(self):
        pose = pose_at([0, 0, -2000], yaw=35.0)
        b = marker_bearing(pose)
        assert b == pytest.approx(30.0, abs=1.0)
        cmd, s = step_strategy_one(StrategyOneState(), pose, CFG, DT)
        assert s.phase == PhaseOne.ROTATE
        assert cmd.wz < 0  # turn right to reduce a right-hand bearing
        assert cmd.vx == 0 and cmd.vy == 0

    def test_small_bearing_starts_approach(self):
        pose = pose_at([0, 0, -2000], yaw=9.0)
        assert abs(marker_bearing(pose)) < math.degrees(CFG.alpha1)
        cmd, s = step_strategy_one(StrategyOneState(), pose, CFG, DT)
        assert s.phase == PhaseOne.APPROACH and cmd.vx > 0
        assert s.target_id == GATE.marker.id

    def test_face_then_align_then_fly(self):
        s = StrategyOneState(PhaseOne.APPROACH, 0.0, GATE.marker.id)
        cmd, s = step_strategy_one(s, pose_at([200, 0, -790], yaw=10.0), CFG, DT)
        assert s.phase == PhaseOne.FACE_PLANE and cmd.wz < 0 and cmd.vx == 0
        cmd, s = step_strategy_one(s, pose_at([200, 0, -790], yaw=1.0), CFG, DT)
        assert s.phase == PhaseOne.ALIGN_LATERAL and cmd.vy < 0
        cmd, s = step_strategy_one(s, pose_at([10, 0, -790], yaw=1.0), CFG, DT)
        assert s.phase == PhaseOne.FLY_THROUGH and cmd.vx == CFG.fly_through_speed

    def test_fly_through_lasts_t5(self):
        s = StrategyOneState(PhaseOne.ALIGN_LATERAL, 0.0, GATE.marker.id)
        cmd, s = step_strategy_one(s, pose_at([0, 0, -790]), CFG, DT)
        ticks = 1
        far = pose_at([0, 0, -3000], yaw=40.0)  # poses are ignored while flying blind
        while s.phase == PhaseOne.FLY_THROUGH:
            cmd, s = step_strategy_one(s, far, CFG, DT)
            if s.phase == PhaseOne.FLY_THROUGH:
                assert (cmd.vx, cmd.vy, cmd.wz) == (CFG.fly_through_speed, 0, 0)
                ticks += 1
        assert ticks * DT == pytest.approx(CFG.t5)
        assert s.phase == PhaseOne.ROTATE and s.phase5_elapsed == 0.0

    def test_missing_pose_holds(self):
        s = StrategyOneState(PhaseOne.APPROACH, 0.0, GATE.marker.id)
        cmd, s2 = step_strategy_one(s, None, CFG, DT)
        assert cmd.as_array().tolist() == [0, 0, 0, 0] and s2 == s

    def test_bad_dt(self):
        with pytest.raises(ValueError):
            step_strategy_one(StrategyOneState(), None, CFG, 0.0)


class TestStrategyTwo:
    def test_flies_to_standoff(self):
        pose = pose_at([600, 100, -2000], yaw=-10.0)
        cmd, s = step_strategy_two(StrategyTwoState(), pose, CFG, DT)
        assert s.phase == PhaseTwo.STANDOFF
        e = target_to_body(pose, (0, 0, -CFG.d1))
        assert np.sign(cmd.vx) == np.sign(e[0]) and np.sign(cmd.vy) == np.sign(e[1])
        assert cmd.wz != 0  # keeps the camera on the gate centre

    def test_close_to_plane_starts_approach(self):
        cmd, s = step_strategy_two(StrategyTwoState(), pose_at([100, 0, -1500]), CFG, DT)
        assert s.phase == PhaseTwo.GATE_APPROACH and s.target_id == GATE.marker.id
        assert cmd.vx >= CFG.cruise_speed

    def test_marker_loss_starts_fly_through(self):
        s = StrategyTwoState(PhaseTwo.GATE_APPROACH, 0.0, 0.0, GATE.marker.id, 1.0)
        stale = pose_at([0, 0, -700], stamp=1.0)
        n = 0
        while s.phase == PhaseTwo.GATE_APPROACH:
            cmd, s = step_strategy_two(s, stale if n % 2 else None, CFG, DT)
            n += 1
        assert n * DT > CFG.dt2 and (n - 1) * DT <= CFG.dt2 + 1e-9
        ticks = 1
        while s.phase == PhaseTwo.FLY_THROUGH:
            cmd, s = step_strategy_two(s, None, CFG, DT)
            ticks += s.phase == PhaseTwo.FLY_THROUGH
        assert ticks * DT == pytest.approx(CFG.t3)

    def test_fresh_pose_resets_loss_clock(self):
        s = StrategyTwoState(PhaseTwo.GATE_APPROACH, 0.25, 0.0, GATE.marker.id, 1.0)
        _, s = step_strategy_two(s, pose_at([0, 0, -1000], stamp=1.1), CFG, DT)
        assert s.marker_lost == 0.0 and s.phase == PhaseTwo.GATE_APPROACH


class TestProperties:
    positions = st.tuples(st.floats(-600, 600), st.floats(-200, 200), st.floats(-4000, -700))

    @given(positions, st.floats(-25, 25), st.sampled_from(list(PhaseOne)), st.booleans())
    def test_strategy_one_outputs_within_limits(self, p, yaw, phase, present):
        g = CFG.gains
        s = StrategyOneState(phase, 1.0 if phase == PhaseOne.FLY_THROUGH else 0.0, GATE.marker.id)
        cmd, _ = step_strategy_one(s, pose_at(p, yaw) if present else None, CFG, DT)
        assert abs(cmd.vy) <= g.limit_y and abs(cmd.vz) <= g.limit_z and abs(cmd.wz) <= g.limit_yaw
        assert abs(cmd.vx) <= max(g.limit_x, CFG.cruise_speed, CFG.fly_through_speed)

    @given(positions, st.floats(-25, 25), st.sampled_from(list(PhaseTwo)), st.booleans())
    def test_strategy_two_outputs_within_limits(self, p, yaw, phase, present):
        g = CFG.gains
        s = StrategyTwoState(phase, 0.0, 0.5 if phase == PhaseTwo.FLY_THROUGH else 0.0, GATE.marker.id, -1.0)
        cmd, _ = step_strategy_two(s, pose_at(p, yaw) if present else None, CFG, DT)
        assert abs(cmd.vx) <= g.limit_x and abs(cmd.vy) <= g.limit_y
        assert abs(cmd.vz) <= g.limit_z and abs(cmd.wz) <= g.limit_yaw

    @given(st.lists(st.tuples(positions, st.floats(-25, 25), st.booleans()), min_size=1, max_size=30))
    def test_deterministic(self, seq):
        def run(step, s):
            out = []
            for k, (p, yaw, present) in enumerate(seq):
                cmd, s = step(s, pose_at(p, yaw, k * DT) if present else None, CFG, DT)
                out.append((cmd.as_array().tolist(), s))
            return out

        assert run(step_strategy_one, StrategyOneState()) == run(step_strategy_one, StrategyOneState())
        assert run(step_strategy_two, StrategyTwoState()) == run(step_strategy_two, StrategyTwoState())


def closed_loop(start: DroneState, strategy: int, ticks: int, cfg: ControlConfig = CFG):
    """Noise-free loop over the single-gate course; yields (state, pilot, command) per tick."""
    pilot = Pilot(COURSE, strategy, cfg, NoiseProfile(), np.random.default_rng(0), default_camera())
    plant = PlantLoop(start)
    s = start
    for _ in range(ticks):
        rc = pilot.tick(s)
        plant.mailbox.put(rc)
        yield s, pilot, rc_to_velocity(rc, CFG.v_max, CFG.w_max)
        s = plant.advance_tick()


class TestClosedLoop:
    def test_phase_one_bearing_non_increasing(self):
        rng = np.random.default_rng(17)
        n = 0
        while n < 100:
            start = state_at([rng.uniform(-300, 300), 0, -rng.uniform(1800, 3000)], rng.uniform(-24, 24))
            seen = observe_markers(COURSE.markers, start.camera_pose(), default_camera(), NoiseProfile(), 0.0)
            if not seen or abs(marker_bearing(pose_of(start))) < math.degrees(CFG.alpha1) + 2.0:
                continue
            n += 1
            bearings = []
            for s, pilot, _ in closed_loop(start, 1, 120):
                if pilot.state.phase != PhaseOne.ROTATE:
                    break
                bearings.append(abs(marker_bearing(pose_of(s))))
            settled = bearings[6:]  # 0.2 s of yaw-rate lag
            assert all(b <= a + 1e-9 for a, b in zip(settled, settled[1:]))
            assert bearings[-1] < math.degrees(CFG.alpha1) + 3.0

    def test_standoff_convergence(self):
        rng = np.random.default_rng(23)
        for _ in range(8):
            p = [rng.uniform(-900, 900), rng.uniform(-150, 150), -rng.uniform(1500, 4000)]
            start = state_at(p, rng.uniform(-10, 10))
            # a vanishing lateral window keeps the run in the stand-off phase
            for k, (s, pilot, _) in enumerate(closed_loop(start, 2, 900, replace(CFG, delta2=1e-6))):
                assert pilot.state.phase == PhaseTwo.STANDOFF
                err = np.linalg.norm(drone_in_gate(pose_of(s)) - [0, 0, -CFG.d1])
                if err < 50.0:
                    break
            assert err < 50.0, f"standoff error {err:.0f} mm after {k * DT:.1f} s from {p}"

    def test_phase_monotonic_strategy_one(self):
        start = state_at([250, 0, -2600], 15.0)
        phases = [int(pilot.state.phase) for _, pilot, _ in closed_loop(start, 1, 700)]
        assert 5 in phases
        for a, b in zip(phases, phases[1:]):
            assert b >= a or (a, b) == (5, 1)
