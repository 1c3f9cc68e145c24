"""Compiled and pure-Python kernels must agree; each is also checked on its own."""

import math

import numpy as np
import pytest

from tests.conftest import random_rotation
from gaterace import kernels
from gaterace._kernels_py import _rodrigues, reprojection_residuals
from gaterace.geometry import rodrigues_to_rotation
from gaterace.perception import marker_corners

BACKENDS = kernels.backends()
INTR = np.array([920.0, 915.0, 478.0, 362.0])
DIST = np.array([-0.08, 0.02, 0.0005, -0.0003, 0.001])


@pytest.fixture(params=sorted(BACKENDS))
def impl(request):
    return BACKENDS[request.param]


def test_backend_selected():
    assert kernels.BACKEND in BACKENDS


@pytest.mark.skipif("compiled" not in BACKENDS, reason="extension not built")
class TestEquivalence:
    def test_project(self, rng):
        pts = rng.uniform([-500, -400, 300], [500, 400, 3000], size=(200, 3))
        a = BACKENDS["python"].project_points(pts, INTR, DIST)
        b = BACKENDS["compiled"].project_points(pts, INTR, DIST)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)

    def test_undistort(self, rng):
        uv = rng.uniform([0, 0], [959, 719], size=(200, 2))
        (a, oka), (b, okb) = (BACKENDS[k].undistort_points(uv, INTR, DIST, 20, 1e-10) for k in ("python", "compiled"))
        assert oka and okb
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_refine_pose(self, rng):
        obj = marker_corners(150.0)
        for _ in range(50):
            R = random_rotation(rng)
            if R[2, 2] > -0.3:  # keep the marker facing the camera
                continue
            t = np.array([rng.uniform(-200, 200), rng.uniform(-150, 150), rng.uniform(700, 1700)])
            obs = BACKENDS["python"].project_points(obj @ R.T + t, INTR, DIST) + rng.normal(0, 0.5, (4, 2))
            R0 = rodrigues_to_rotation(rng.normal(0, 0.03, 3)) @ R
            t0 = t + [5.0, -5.0, 20.0]
            out = [BACKENDS[k].refine_pose(R0, t0, obj, obs, INTR, DIST, 100, 1e-3, 1e-10) for k in ("python", "compiled")]
            (Ra, ta, ra, _), (Rb, tb, rb, _) = out
            np.testing.assert_allclose(Ra, Rb, atol=1e-8)
            np.testing.assert_allclose(ta, tb, atol=1e-5)
            assert ra == pytest.approx(rb, abs=1e-9)

    @pytest.mark.parametrize("sigma", [0.0, 60.0])
    def test_integrate_plant(self, sigma, rng):
        state = np.array([10.0, -20.0, 1000.0, 170.0, 100.0, -50.0, 20.0, 5.0])
        cmd = np.array([400.0, -100.0, 50.0, 30.0])
        noise = rng.standard_normal((500, 2))
        a = BACKENDS["python"].integrate_plant(state, np.zeros(2), cmd, 0.3, 0.15, 0.005, 500, noise, sigma, 1.0, 400.0)
        b = BACKENDS["compiled"].integrate_plant(state, np.zeros(2), cmd, 0.3, 0.15, 0.005, 500, noise, sigma, 1.0, 400.0)
        np.testing.assert_allclose(a[0], b[0], rtol=1e-12, atol=1e-9)
        np.testing.assert_allclose(a[1], b[1], rtol=1e-12, atol=1e-12)


class TestKernels:
    def test_jacobian_matches_finite_differences(self, rng):
        obj = marker_corners(150.0)
        R = random_rotation(rng)
        if R[2, 2] > 0:
            R = R @ np.diag([1.0, -1.0, -1.0])
        t = np.array([50.0, -30.0, 900.0])
        obs = np.zeros((4, 2))
        res, J = reprojection_residuals(R, t, obj, obs, INTR, DIST, True)
        h = 1e-6
        for k in range(6):
            d = np.zeros(6)
            d[k] = h
            rp, _ = reprojection_residuals(_rodrigues(d[:3]) @ R, t + d[3:], obj, obs, INTR, DIST, False)
            d[k] = -h
            rm, _ = reprojection_residuals(_rodrigues(d[:3]) @ R, t + d[3:], obj, obs, INTR, DIST, False)
            np.testing.assert_allclose(J[:, k], (rp - rm) / (2 * h), rtol=1e-5, atol=1e-4)

    def test_refine_reaches_exact_pose(self, impl):
        obj = marker_corners(150.0)
        R = np.diag([1.0, -1.0, -1.0])
        t = np.array([30.0, 10.0, 1000.0])
        obs = impl.project_points(obj @ R.T + t, INTR, DIST)
        R1, t1, rms, it = impl.refine_pose(R, t + [3, -2, 15], obj, obs, INTR, DIST, 100, 1e-3, 1e-10)
        np.testing.assert_allclose(t1, t, atol=1e-6)
        assert rms < 1e-8 and it <= 100

    def test_plant_step_response(self, impl):
        state = np.zeros(8)
        out, _ = impl.integrate_plant(state, np.zeros(2), [500.0, 0, 0, 0], 0.3, 0.15, 0.005, 60, None, 0.0, 1.0, 400.0)
        assert out[4] == pytest.approx(500 * (1 - math.exp(-1)), rel=1e-12)

    def test_yaw_wraps(self, impl):
        state = np.array([0, 0, 0, 179.0, 0, 0, 0, 100.0])
        out, _ = impl.integrate_plant(state, np.zeros(2), [0, 0, 0, 100.0], 0.3, 0.15, 0.005, 10, None, 0.0, 1.0, 400.0)
        assert -180.0 < out[3] < -170.0


def test_benchmark_script_runs(capsys):
    import runpy
    from pathlib import Path

    bench = runpy.run_path(str(Path(__file__).parents[1] / "benchmarks" / "bench_kernels.py"))
    assert bench["main"](["--repeat", "1", "--number", "1"]) == 0
    assert "refine_pose" in capsys.readouterr().out
