"""Command-line entry point: ``gaterace {pose-accuracy,campaign,live,serve}``.

Exit status is 0 only when the run meets the thresholds of its configuration,
1 when it completes but misses them and 2 on configuration or link errors.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import link
from .harness import (
    ExperimentConfig,
    campaign_course,
    pose_accuracy_ok,
    run_control_campaign,
    run_live,
    run_live_external,
    run_pose_accuracy,
    serve,
)
from .vehicle import CourseError

log = logging.getLogger("gaterace")


def _common(p: argparse.ArgumentParser, profile_default: str) -> None:
    p.add_argument("--config", type=Path, help="experiment config JSON")
    p.add_argument("--course", help="course JSON (default: random course drawn from the seed)")
    p.add_argument("--strategy", type=int, choices=(1, 2))
    p.add_argument("--profile", default=None, help=f"noise profile (default {profile_default})")
    p.add_argument("--runs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gaterace", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("pose-accuracy", help="PnP error statistics over random marker poses")
    _common(p, "desk")
    p.add_argument("--samples", type=int)

    p = sub.add_parser("campaign", help="seeded closed-loop runs over a gate course")
    _common(p, "natural")

    p = sub.add_parser("live", help="one run with commands sent over the UDP link")
    _common(p, "natural")
    p.add_argument("--connect", metavar="HOST:PORT",
                   help="fly against a running 'serve' instance instead of an embedded one")
    p.add_argument("--telemetry-port", type=int, default=link.TELEMETRY_PORT)
    p.add_argument("--no-pace", action="store_true", help="do not throttle to the camera rate")
    p.add_argument("--timeout", type=float, default=link.DEFAULT_TIMEOUT, help="reply timeout, s")

    p = sub.add_parser("serve", help="realtime plant behind the UDP command/telemetry link")
    _common(p, "natural")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=link.COMMAND_PORT)
    p.add_argument("--telemetry-port", type=int, default=link.TELEMETRY_PORT)
    p.add_argument("--duration", type=float, help="seconds to serve (default: until interrupted)")
    return ap


_SCENARIO = {"pose-accuracy": "pose_accuracy", "campaign": "control_run", "live": "live_link",
             "serve": "live_link"}
_PROFILE = {"pose-accuracy": "desk"}


def make_config(args: argparse.Namespace) -> ExperimentConfig:
    base = ExperimentConfig.from_json_file(args.config).to_dict() if args.config else {}
    base["scenario"] = _SCENARIO[args.cmd]
    if not args.config or args.profile is not None:
        base["profile"] = args.profile or _PROFILE.get(args.cmd, "natural")
    for key, attr in (("course", "course"), ("strategy", "strategy"), ("runs", "runs"),
                      ("seed", "seed"), ("out_dir", "out"), ("samples", "samples")):
        v = getattr(args, attr, None)
        if v is not None:
            base[key] = v
    return ExperimentConfig.from_dict(base)


def _emit(obj: dict, out: str | None, name: str) -> None:
    text = json.dumps(obj, indent=2)
    print(text)
    if out:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / name).write_text(text + "\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = make_config(args)
    except (ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"gaterace: configuration error: {exc}", file=sys.stderr)
        return 2
    th = cfg.thresholds

    try:
        if args.cmd == "pose-accuracy":
            rep = run_pose_accuracy(cfg)
            ok = pose_accuracy_ok(rep, th)
            _emit({**rep.to_dict(), "ok": ok}, cfg.out_dir, "pose_accuracy.json")
            return 0 if ok else 1

        if args.cmd == "campaign":
            camp = run_control_campaign(cfg)
            ok = camp.ok(th)
            print(json.dumps({**camp.summary(), "ok": ok}, indent=2))
            return 0 if ok else 1

        if args.cmd == "live":
            if args.connect:
                host, _, port = args.connect.rpartition(":")
                rep = run_live_external(cfg, host=host or "127.0.0.1", port=int(port),
                                        telemetry_port=args.telemetry_port, timeout=args.timeout)
            else:
                out = Path(cfg.out_dir) if cfg.out_dir else None
                if out:
                    out.mkdir(parents=True, exist_ok=True)
                with open(out / "live_run.csv", "w") if out else contextlib.nullcontext() as fh:
                    rep = run_live(cfg, pace=not args.no_pace, timeout=args.timeout,
                                   csv_out=fh if out else None)
                if out:
                    rep.trajectory = str(out / "live_run.csv")
            ok = (rep.completed and rep.achieved_rate_hz is not None
                  and rep.achieved_rate_hz >= th.min_rate_hz and rep.latency_mean_ms < th.max_latency_ms)
            _emit({**rep.to_dict(), "ok": ok}, cfg.out_dir, "live_report.json")
            return 0 if ok else 1

        if args.cmd == "serve":
            course = campaign_course(cfg)
            serve(replace(cfg, runs=1), course, host=args.host, port=args.port,
                  telemetry_port=args.telemetry_port, duration=args.duration)
            return 0
    except link.LinkTimeout as exc:
        print(f"gaterace: link timeout: {exc}; is 'gaterace serve' running?", file=sys.stderr)
        return 2
    except (link.LinkError, CourseError, OSError) as exc:
        print(f"gaterace: {exc}", file=sys.stderr)
        return 2
    raise AssertionError(args.cmd)


if __name__ == "__main__":
    sys.exit(main())
