"""Compare the compiled and pure-Python kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat N] [--number N] [--end-to-end] [--json PATH]

Kernel timings call each backend module directly; ``--end-to-end`` also times
one closed-loop run per backend in a subprocess (the backend is fixed at import).
"""

import argparse
import json
import math
import os
import subprocess
import sys
import timeit

import numpy as np

from gaterace.camera import default_camera
from gaterace.geometry import rot_x, rot_y
from gaterace.kernels import backends
from gaterace.perception import marker_corners


def cases():
    cam = default_camera()
    intr, dist = cam.intrinsics.vector, cam.distortion.vector
    rng = np.random.default_rng(0)
    pts = np.column_stack((rng.uniform(-400, 400, (256, 2)), rng.uniform(600, 2000, 256)))
    obj = marker_corners(150.0)
    R = rot_x(math.pi) @ rot_y(0.3)
    t = np.array([-120.0, 40.0, 900.0])

    def project(k):
        return k.project_points(pts, intr, dist)

    ref = backends()["python"]
    uv = ref.project_points(pts, intr, dist)
    obs = ref.project_points(obj @ R.T + t, intr, dist) + rng.normal(0, 0.3, (4, 2))
    R0 = R @ rot_x(0.05)
    state, cmd, draws = np.zeros(8), np.array([400.0, 50.0, 0.0, 10.0]), rng.standard_normal((7, 2))
    return {
        "project_points (256 pts)": project,
        "undistort_points (256 pts)": lambda k: k.undistort_points(uv, intr, dist, 20, 1e-10),
        "refine_pose (4 corners)": lambda k: k.refine_pose(R0, t + 20, obj, obs, intr, dist, 100, 1e-3, 1e-10),
        "integrate_plant (7 substeps)": lambda k: k.integrate_plant(
            state, np.zeros(2), cmd, 0.3, 0.15, 0.005, 7, draws, 10.0, 1.0, 400.0),
    }


END_TO_END = (
    "import io, time; from gaterace.harness import ExperimentConfig, campaign_course, simulate_run;"
    "from gaterace.kernels import BACKEND;"
    "cfg = ExperimentConfig(strategy=2, profile='natural', seed=0); c = campaign_course(cfg);"
    "t0 = time.perf_counter(); r = simulate_run(cfg, c, 0, io.StringIO());"
    "print(BACKEND, time.perf_counter() - t0, r.ticks)"
)


def end_to_end(name: str) -> dict:
    env = dict(os.environ, GATERACE_PURE_PYTHON="1" if name == "python" else "0")
    out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, check=True,
                         capture_output=True, text=True).stdout.split()
    if out[0] != name:
        raise RuntimeError(f"asked for {name} backend, got {out[0]}")
    return {"seconds": float(out[1]), "ticks": int(out[2])}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=200)
    ap.add_argument("--end-to-end", action="store_true")
    ap.add_argument("--json", help="write results to this path")
    args = ap.parse_args(argv)

    mods = backends()
    if "compiled" not in mods:
        print("compiled extension not built; timing the python backend only", file=sys.stderr)
    results = {}
    print(f"{'kernel':30s}" + "".join(f"{n:>14s}" for n in mods) + ("   speedup" if len(mods) > 1 else ""))
    for label, fn in cases().items():
        row = {}
        for name, mod in mods.items():
            best = min(timeit.repeat(lambda: fn(mod), repeat=args.repeat, number=args.number))
            row[name] = best / args.number * 1e6  # us per call
        results[label] = row
        line = f"{label:30s}" + "".join(f"{row[n]:11.1f} us" for n in mods)
        if len(mods) > 1:
            line += f"   {row['python'] / row['compiled']:6.1f}x"
        print(line)

    if args.end_to_end:
        e2e = {name: end_to_end(name) for name in mods}
        results["closed-loop run"] = e2e
        for name, r in e2e.items():
            print(f"closed-loop run [{name}]: {r['seconds']:.2f} s for {r['ticks']} ticks "
                  f"({r['seconds'] / r['ticks'] * 1e3:.2f} ms/tick)")

    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
