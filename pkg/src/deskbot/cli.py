"""Command line entry points.

deskbot sim        run a scenario to completion and write CSV traces
deskbot calibrate  sweep the motors and write a calibration table CSV
deskbot serve      run the scenario paced to wall time with the websocket
                   bridge for the browser UI

Exit codes: 0 success, 2 configuration/usage errors, 3 runtime failures.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

from .autonomy import export_map
from .bus import NodeError
from .control import CalibrationError, calibrate, write_table_csv
from .plant import Plant
from .scenario import (
    ConfigError,
    ScenarioConfig,
    Simulation,
    TraceRecorder,
    build_simulation,
    load_config,
    load_script,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _fail(message: str, code: int) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _load(args) -> ScenarioConfig:
    cfg = load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _write_outputs(sim: Simulation, recorder: TraceRecorder, out_dir: str) -> dict:
    recorder.write(out_dir)
    report = sim.report()
    goto = sim.by_name.get("goto_planner")
    if goto is not None:
        report["goal_reached"] = goto.arrived
    mapper = sim.by_name.get("mapper")
    if mapper is not None:
        path = os.path.join(out_dir, sim.cfg.mapping.export)
        export_map(mapper.grid, path, sim.cfg.mapping.config)
        report["map"] = sim.cfg.mapping.export
    with open(os.path.join(out_dir, "report.json"), "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    return report


def _print_summary(report: dict, out_dir: str) -> None:
    odom = report["final_odom"]
    truth = report["final_truth"]
    print(f"ran {report['ticks']} ticks ({report['duration_s']:.2f} s)")
    print(
        f"odom  pose: x={odom['x']:.4f} y={odom['y']:.4f} theta={odom['theta']:.4f}"
    )
    print(
        f"truth pose: x={truth['x']:.4f} y={truth['y']:.4f} theta={truth['theta']:.4f}"
    )
    print(
        f"drift: {report['drift']['position']:.4f} m, "
        f"{report['drift']['heading']:.4f} rad"
    )
    if "goal_reached" in report:
        print(f"goal reached: {'yes' if report['goal_reached'] else 'no'}")
    if report.get("estop_latched"):
        print("e-stop latched at end of run")
    print(f"outputs: {out_dir}")


def cmd_sim(args) -> int:
    try:
        cfg = _load(args)
        script = load_script(args.script) if args.script else None
    except ConfigError as exc:
        return _fail(str(exc), EXIT_CONFIG)
    sim = build_simulation(cfg, script=script)
    recorder = TraceRecorder()
    sim.registry.sinks.append(recorder)
    try:
        sim.run()
    except NodeError as exc:
        recorder.write(args.out_dir)  # keep the partial traces for debugging
        return _fail(str(exc), EXIT_RUNTIME)
    report = _write_outputs(sim, recorder, args.out_dir)
    _print_summary(report, args.out_dir)
    return EXIT_OK


def cmd_calibrate(args) -> int:
    try:
        cfg = _load(args)
    except ConfigError as exc:
        return _fail(str(exc), EXIT_CONFIG)
    plant = Plant(
        world=cfg.world,
        geom=cfg.geom,
        encoder_config=cfg.encoder,
        motor_left=cfg.motor_left,
        motor_right=cfg.motor_right,
        lidar_config=cfg.lidar,
        start_pose=cfg.start_pose,
        dt=cfg.dt,
        seed=cfg.seed,
    )
    try:
        table = calibrate(
            plant,
            step=args.step,
            settle_time=args.settle,
            window=args.window,
            signed_sweep=args.signed,
        )
    except CalibrationError as exc:
        return _fail(str(exc), EXIT_RUNTIME)
    write_table_csv(table, args.out)
    for wheel, side in (("left", table.left), ("right", table.right)):
        nonneg = [(p, s) for p, s in side.points if p >= 0]
        deadband = max((p for p, s in nonneg if s == 0.0), default=0)
        top = nonneg[-1][1] if nonneg else 0.0
        print(f"{wheel}: deadband <= pwm {deadband}, {top:.4f} m/s at pwm 255")
    print(f"table: {args.out}")
    return EXIT_OK


def cmd_serve(args) -> int:
    from .bridge import Bridge, BridgeError  # websockets import kept out of sim path

    try:
        cfg = _load(args)
        script = load_script(args.script) if args.script else None
    except ConfigError as exc:
        return _fail(str(exc), EXIT_CONFIG)
    if args.speed <= 0:
        return _fail(f"--speed must be positive, got {args.speed}", EXIT_CONFIG)

    bridge = Bridge(
        world=cfg.world,
        port=args.port,
        meta={
            "dt": cfg.dt,
            "mode": cfg.mode,
            "track_width": cfg.geom.track_width,
            "ticks_per_meter": cfg.encoder.ticks_per_rev
            / (2.0 * math.pi * cfg.encoder.wheel_radius),
            "speed": args.speed,
        },
    )
    sim = build_simulation(cfg, script=script, inbound_drain=bridge.drain_inbound)
    recorder = TraceRecorder()
    sim.registry.sinks.append(recorder)
    sim.registry.sinks.append(bridge.collect)
    sim.after_tick.append(bridge.flush_tick)
    try:
        bridge.start()
    except BridgeError as exc:
        return _fail(str(exc), EXIT_CONFIG)
    print(f"serving on ws://127.0.0.1:{args.port} (Ctrl-C to stop)")

    import time

    period = cfg.dt / args.speed
    next_deadline = time.monotonic()
    code = EXIT_OK
    try:
        while True:
            sim.run_tick()
            next_deadline += period
            delay = next_deadline - time.monotonic()
            if delay > 0:
                time.sleep(delay)
    except KeyboardInterrupt:
        pass
    except NodeError as exc:
        code = EXIT_RUNTIME
        print(f"error: {exc}", file=sys.stderr)
    finally:
        bridge.stop()
    if args.out_dir:
        report = _write_outputs(sim, recorder, args.out_dir)
        _print_summary(report, args.out_dir)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deskbot",
        description="Differential-drive desk robot simulator and control stack.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("sim", help="run a scenario and write traces")
    sim.add_argument("--config", required=True, help="scenario JSON")
    sim.add_argument("--out-dir", default="out", help="trace/report directory")
    sim.add_argument("--script", help="key script file (tick:key lines)")
    sim.add_argument("--seed", type=int, help="override the config seed")
    sim.set_defaults(func=cmd_sim)

    cal = sub.add_parser("calibrate", help="sweep motors into a speed table")
    cal.add_argument("--config", required=True, help="scenario JSON")
    cal.add_argument("--out", default="calibration.csv", help="output table CSV")
    cal.add_argument("--step", type=int, default=15, help="pwm sweep step")
    cal.add_argument("--settle", type=float, default=1.0, help="settle time per level, s")
    cal.add_argument("--window", type=float, default=0.5, help="measurement window, s")
    cal.add_argument("--signed", action="store_true", help="sweep negative pwm too")
    cal.add_argument("--seed", type=int, help="override the config seed")
    cal.set_defaults(func=cmd_calibrate)

    srv = sub.add_parser("serve", help="run paced to wall time with the web UI")
    srv.add_argument("--config", required=True, help="scenario JSON")
    srv.add_argument("--port", type=int, default=8765, help="websocket port")
    srv.add_argument("--speed", type=float, default=1.0, help="time multiplier")
    srv.add_argument("--script", help="key script file")
    srv.add_argument("--seed", type=int, help="override the config seed")
    srv.add_argument("--out-dir", default=None, help="write traces on exit")
    srv.set_defaults(func=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
