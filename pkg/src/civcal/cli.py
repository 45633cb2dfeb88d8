"""Command line driver.

    civcal calibrate --config session.cfg [--output DIR] [--sensor ID] [--params KEY=VALUE]
    civcal compare REPORT_A REPORT_B [--sensor ID] [--output FILE]
    civcal simulate --output DIR [--config scene.cfg] [--seed N]
    civcal export-plots --config session.cfg --report REPORT --output DIR

Exit codes: 0 success, 1 a sensor failed, 2 bad configuration or input.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import io
from .errors import CalibrationError, ConfigError, MismatchedSensors
from .geometry import apply, transform_from_pose
from .matching import repetition_error
from .pipeline import CalibrationParams, SensorRun, calibrate_sensor
from .simulator import (LASERSCANNER_NOISE, STEREO_NOISE, TRACE_SIGMA, BoxObject, SceneConfig, drive_through_scene,
                        simulate_background, simulate_drive, straight_path, with_noise)

log = logging.getLogger("civcal")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2
NOISE_PROFILES = {"none": {"range_sigma": 0.0, "angular_sigma": 0.0},
                  "laser": LASERSCANNER_NOISE, "stereo": STEREO_NOISE}


def parse_overrides(items) -> dict[str, str]:
    out = {}
    for item in items or ():
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"--params expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def make_params(overrides: dict) -> CalibrationParams:
    try:
        return CalibrationParams.from_flat(overrides)
    except KeyError as exc:
        raise ConfigError(f"unknown parameter(s): {exc.args[0]}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid parameter value: {exc}") from None


def _select(available, wanted):
    if not wanted:
        return sorted(available)
    unknown = sorted(set(wanted) - set(available))
    if unknown:
        raise ConfigError(f"unknown sensor id(s): {', '.join(unknown)}")
    return sorted(set(wanted))


# calibrate

def _run_sensor(sensor_id, inputs, trace, params, out_dir: Path) -> SensorRun:
    try:
        background = io.read_frames(inputs.background, sensor_id)
        drive = io.read_frames(inputs.drive, sensor_id)
    except (OSError, ValueError) as exc:
        run = SensorRun(None, [], [], None, f"input error: {exc} (sensor {sensor_id})")
    else:
        run = calibrate_sensor(background, drive, trace, params, sensor_id)
    out_dir.mkdir(parents=True, exist_ok=True)
    io.write_report(out_dir / "report.txt", {sensor_id: run}, params.flat())
    io.write_detections(out_dir / "detections.txt", run.detections)
    io.write_boxes(out_dir / "background_boxes.txt", run.background.boxes if run.background else [])
    with open(out_dir / "skipped_frames.txt", "w") as fh:
        fh.write("# timestamp reason\n")
        for t, reason in run.frame_errors:
            fh.write(f"{io.fmt(t)} {reason}\n")
    return run


def cmd_calibrate(args) -> int:
    if not args.config:
        raise ConfigError("calibrate needs --config")
    param_keys = set(CalibrationParams().flat())
    session = io.load_session(args.config, param_keys)
    overrides = {**session.overrides, **parse_overrides(args.params)}
    params = make_params(overrides)
    out = args.output or session.output
    if not out:
        raise ConfigError("no output directory (use --output or session.output)")
    sensors = _select(session.sensors, args.sensor)
    try:
        trace = io.read_trace(session.trace)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read trace: {exc}") from None

    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    with ThreadPoolExecutor(max_workers=min(len(sensors), os.cpu_count() or 1)) as pool:
        futures = {s: pool.submit(_run_sensor, s, session.sensors[s], trace, params, out / s) for s in sensors}
        runs = {s: f.result() for s, f in futures.items()}
    io.write_report(out / "report.txt", runs, params.flat())

    failed = False
    for s in sensors:
        run = runs[s]
        if run.result is None:
            failed = True
            print(f"{s}: FAILED {run.error}")
        else:
            t = run.result.transform.translation
            print(f"{s}: ok pairs={run.result.pair_count} beta_diff={math.degrees(run.result.beta_diff):.4f} deg "
                  f"t=({t[0]:.3f}, {t[1]:.3f}, {t[2]:.3f}) m skipped={len(run.frame_errors)}")
    return EXIT_FAILED if failed else EXIT_OK


# compare

COMPARE_HEADER = ("sensor", "dpsi1_deg", "dpsi2_deg", "dpsi3_deg", "dx_cm", "dy_cm", "dz_cm")


def compare_reports(report_a, report_b, sensors=None) -> tuple[list[tuple], list[str]]:
    """Rows ``(sensor, dpsi1, dpsi2, dpsi3, dx, dy, dz)`` in degrees and centimeters."""
    a, b = io.read_report(report_a), io.read_report(report_b)
    if set(a) != set(b):
        raise MismatchedSensors(f"sensor ids differ: {sorted(a)} vs {sorted(b)}")
    rows, failures = [], []
    for s in _select(a, sensors):
        if "transform" not in a[s] or "transform" not in b[s]:
            failures.append(s)
            continue
        e = repetition_error(a[s]["transform"], b[s]["transform"])
        rows.append((s, e.d_psi1, e.d_psi2, e.d_psi3, 100 * e.d_x, 100 * e.d_y, 100 * e.d_z))
    return rows, failures


def format_table(rows) -> str:
    lines = ["  ".join(f"{h:>10}" for h in COMPARE_HEADER)]
    for row in rows:
        lines.append(f"{row[0]:>10}  " + "  ".join(f"{v:10.2f}" if k >= 3 else f"{v:10.3f}"
                                                     for k, v in enumerate(row[1:])))
    return "\n".join(lines)


def cmd_compare(args) -> int:
    rows, failures = compare_reports(args.report_a, args.report_b, args.sensor)
    table = format_table(rows)
    print(table)
    for s in failures:
        print(f"{s}: no transform in one of the reports")
    if args.output:
        Path(args.output).write_text(table + "\n")
    return EXIT_FAILED if failures else EXIT_OK


# simulate

SCENE_FLOATS = {"range_sigma", "angular_sigma", "trace_sigma", "lateral", "start", "stop", "speed",
                "frame_rate", "vehicle_length", "vehicle_width", "vehicle_height"}


def _floats(text, n, key):
    parts = text.split()
    if len(parts) != n:
        raise ConfigError(f"{key} expects {n} numbers")
    try:
        return [float(v) for v in parts]
    except ValueError:
        raise ConfigError(f"{key}: not a number in {text!r}") from None


def load_scene(path, seed: int | None) -> tuple[dict[str, SceneConfig], int]:
    """Scene configs per sensor from a simulator config (``None`` for the default scene)."""
    values = io.parse_key_values(path) if path else {}
    scene, poses, objects = {}, {}, {}
    noise = "laser"
    path_xy = None
    for key, value in values.items():
        parts = key.split(".")
        if key == "scene.noise":
            if value not in NOISE_PROFILES:
                raise ConfigError(f"scene.noise must be one of {sorted(NOISE_PROFILES)}")
            noise = value
        elif key == "scene.seed":
            scene["seed"] = int(value)
        elif key == "scene.path":
            path_xy = _floats(value, 4, key)
        elif len(parts) == 2 and parts[0] == "scene" and parts[1] in SCENE_FLOATS:
            scene[parts[1]] = _floats(value, 1, key)[0]
        elif len(parts) == 3 and parts[0] == "scene" and parts[1] == "object":
            objects[parts[2]] = _floats(value, 6, key)
        elif len(parts) == 3 and parts[0] == "sensor" and parts[2] == "pose" and parts[1]:
            poses[parts[1]] = _floats(value, 6, key)
        else:
            raise ConfigError(f"unknown simulator key {key!r}")
    seed = seed if seed is not None else int(scene.pop("seed", 0))
    scene.pop("seed", None)
    profile = dict(NOISE_PROFILES[noise])
    for k in ("range_sigma", "angular_sigma"):
        if k in scene:
            profile[k] = scene.pop(k)
    trace_sigma = scene.pop("trace_sigma", 0.0 if noise == "none" else TRACE_SIGMA)
    layout = {k: scene.pop(k) for k in ("lateral", "start", "stop", "speed") if k in scene}

    def finish(cfg):
        return with_noise(cfg, profile, trace_sigma=trace_sigma, **scene)

    if not poses:
        if path_xy is not None or objects:
            raise ConfigError("scene.path and scene.object need at least one sensor.<id>.pose")
        return {"s1": finish(drive_through_scene(seed, **layout))}, seed

    if path_xy is None:
        raise ConfigError("scene.path is required when sensor poses are given")
    speed = layout.get("speed", 8.0)
    path = straight_path(path_xy[:2], path_xy[2:], speed)
    boxes = tuple(BoxObject((o[0], o[1]), o[2], o[3], o[4], math.radians(o[5])) for _, o in sorted(objects.items()))
    xy = np.array([p[3:5] for p in poses.values()])
    extent = (xy[:, 0].min() - 40, xy[:, 0].max() + 40, xy[:, 1].min() - 40, xy[:, 1].max() + 40)
    configs = {}
    for k, (sensor_id, pose) in enumerate(sorted(poses.items())):
        sensor_seed = int(np.random.SeedSequence([seed, k]).generate_state(1)[0])
        cfg = SceneConfig(true_extrinsic=transform_from_pose(*pose), ground_extent=extent,
                          background_objects=boxes, path=path, seed=sensor_seed, trace_seed=seed)
        configs[sensor_id] = finish(cfg)
    return configs, seed


def cmd_simulate(args) -> int:
    if not args.output:
        raise ConfigError("simulate needs --output")
    configs, _ = load_scene(args.config, args.seed)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    lines, truths, trace = [], {}, None
    for sensor_id, cfg in configs.items():
        bg_dir, drive_dir = out / sensor_id / "background", out / sensor_id / "drive"
        bg_dir.mkdir(parents=True, exist_ok=True)
        drive_dir.mkdir(parents=True, exist_ok=True)
        io.write_frame(bg_dir / "frame_0000.txt", simulate_background(cfg).cloud)
        frames, trace = simulate_drive(cfg)
        for k, frame in enumerate(frames):
            io.write_frame(drive_dir / f"frame_{k:04d}.txt", frame.cloud)
        truths[sensor_id] = cfg.true_extrinsic
        lines.append(f"sensor.{sensor_id}.background = {sensor_id}/background/*.txt")
        lines.append(f"sensor.{sensor_id}.drive = {sensor_id}/drive/*.txt")
        print(f"{sensor_id}: {len(frames)} drive frames")
    io.write_trace(out / "trace.txt", trace)
    io.write_truth(out / "truth.txt", truths)
    (out / "session.cfg").write_text("\n".join(["session.trace = trace.txt", "session.output = calibration",
                                               *lines]) + "\n")
    return EXIT_OK


# export-plots

def cmd_export_plots(args) -> int:
    if not (args.config and args.report and args.output):
        raise ConfigError("export-plots needs --config, --report and --output")
    session = io.load_session(args.config, set(CalibrationParams().flat()))
    report = io.read_report(args.report)
    report_dir = Path(args.report).parent
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    failed = False
    for s in _select(report, args.sensor):
        entry = report[s]
        if "transform" not in entry:
            failed = True
            print(f"{s}: no transform in report, skipped")
            continue
        transform = entry["transform"]
        theta_g = float(entry.get("param.background.theta_g", CalibrationParams().theta_g))
        ground = np.empty((0, 3))
        if s in session.sensors:
            frames = io.read_frames(session.sensors[s].background, s)
            if frames:
                world = apply(transform, np.vstack([f.points for f in frames]))
                ground = world[world[:, 2] <= theta_g]
        np.savetxt(out / f"{s}_ground.csv", ground, fmt=io.FLOAT_FMT, delimiter=",", header="x,y,z", comments="")
        log_path = report_dir / s / "detections.txt"
        dets = io.read_detections(log_path) if log_path.exists() else []
        centers = np.array([[d["timestamp"], *apply(transform, d["sensor_center"])] for d in dets]).reshape(-1, 4)
        np.savetxt(out / f"{s}_centers.csv", centers, fmt=io.FLOAT_FMT, delimiter=",",
                   header="timestamp,x,y,z", comments="")
        print(f"{s}: {len(ground)} ground points, {len(centers)} centers")
    return EXIT_FAILED if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="civcal", description="Extrinsic calibration from a cooperating vehicle.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", required=config_required)
        p.add_argument("--output")
        p.add_argument("--sensor", action="append", help="restrict to this sensor id (repeatable)")

    p = sub.add_parser("calibrate", help="calibrate every sensor of a session")
    common(p)
    p.add_argument("--params", action="append", metavar="KEY=VALUE", help="parameter override (repeatable)")
    p.add_argument("--seed", type=int, help="accepted for symmetry; calibration is deterministic")

    p = sub.add_parser("compare", help="repetition error between two reports")
    p.add_argument("report_a")
    p.add_argument("report_b")
    p.add_argument("--output")
    p.add_argument("--sensor", action="append")

    p = sub.add_parser("simulate", help="write a synthetic session")
    p.add_argument("--config")
    p.add_argument("--output")
    p.add_argument("--seed", type=int)

    p = sub.add_parser("export-plots", help="world-frame ground points and object centers")
    common(p)
    p.add_argument("--report")
    return parser


COMMANDS = {"calibrate": cmd_calibrate, "compare": cmd_compare, "simulate": cmd_simulate,
            "export-plots": cmd_export_plots}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, MismatchedSensors) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CalibrationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
