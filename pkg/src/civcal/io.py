"""Plain-text file formats: frames, traces, background boxes, reports, configs.

All formats are line based and whitespace separated.  Lines starting with
``#`` are comments.  Floats are written with 12 significant digits, which
keeps files diffable and reproducible byte for byte.
"""
from __future__ import annotations

import glob
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .background import BackgroundBox
from .errors import ConfigError
from .geometry import PointCloud, RigidTransform, rotation_to_euler
from .matching import WorldTrace

FLOAT_FMT = "%.12g"


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "0" if v == 0 else FLOAT_FMT % v
    return str(value)


def fmt_row(values) -> str:
    return " ".join(fmt(v) for v in values)


def _data_lines(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line


# frames

def write_frame(path, cloud: PointCloud) -> None:
    pts = np.asarray(cloud.points, dtype=float).reshape(-1, 3)
    with open(path, "w") as fh:
        fh.write(f"{fmt(float(cloud.timestamp))} {len(pts)}\n")
        if len(pts):
            np.savetxt(fh, pts, fmt=FLOAT_FMT)


def read_frame(path, frame_id: str = "sensor") -> PointCloud:
    lines = _data_lines(path)
    try:
        _, header = next(lines)
    except StopIteration:
        raise ValueError(f"{path}: empty frame file") from None
    parts = header.split()
    if len(parts) != 2:
        raise ValueError(f"{path}: header must be 'timestamp count'")
    timestamp, count = float(parts[0]), int(parts[1])
    rows = [line.split() for _, line in lines]
    pts = np.array(rows, dtype=float).reshape(-1, 3) if rows else np.empty((0, 3))
    if len(pts) != count:
        raise ValueError(f"{path}: header announces {count} points, found {len(pts)}")
    return PointCloud(pts, frame_id, timestamp)


def read_frames(paths, frame_id: str = "sensor") -> list[PointCloud]:
    frames = [read_frame(p, frame_id) for p in paths]
    return sorted(frames, key=lambda f: f.timestamp)


# traces

def write_trace(path, trace: WorldTrace) -> None:
    with open(path, "w") as fh:
        fh.write("# timestamp x y heading_deg length width ref_offset_x ref_offset_y\n")
        for t, p, h in zip(trace.timestamps, trace.positions, trace.headings):
            fh.write(fmt_row([float(t), p[0], p[1], math.degrees(h), trace.vehicle_length,
                              trace.vehicle_width, *trace.reference_offset]) + "\n")


def read_trace(path) -> WorldTrace:
    rows = []
    for lineno, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 8:
            raise ValueError(f"{path}:{lineno}: expected 8 columns, got {len(parts)}")
        rows.append([float(v) for v in parts])
    if not rows:
        return WorldTrace(np.empty(0), np.empty((0, 2)), np.empty(0))
    a = np.array(rows)
    return WorldTrace(a[:, 0], a[:, 1:3], np.radians(a[:, 3]), float(a[0, 4]), float(a[0, 5]), a[0, 6:8])


# background boxes

def write_boxes(path, boxes) -> None:
    with open(path, "w") as fh:
        fh.write("# vertex_count x y ... max_height\n")
        for box in boxes:
            fh.write(fmt_row([len(box.polygon), *box.polygon.ravel(), box.max_height]) + "\n")


def read_boxes(path, margin: float) -> list[BackgroundBox]:
    boxes = []
    for lineno, line in _data_lines(path):
        parts = line.split()
        n = int(parts[0])
        if len(parts) != 2 * n + 2:
            raise ValueError(f"{path}:{lineno}: expected {2 * n + 2} fields for {n} vertices")
        poly = np.array(parts[1:1 + 2 * n], dtype=float).reshape(n, 2)
        boxes.append(BackgroundBox(poly, float(parts[-1]), margin))
    return boxes


# detection log

DETECTION_HEADER = ("# timestamp center_x center_y half_length half_width yaw_deg shape n_points"
                    " sensor_x sensor_y sensor_z corner_x corner_y")


def write_detections(path, detections) -> None:
    with open(path, "w") as fh:
        fh.write(DETECTION_HEADER + "\n")
        for d in detections:
            b = d.box
            corner = d.corner if d.corner is not None else (math.nan, math.nan)
            fh.write(fmt_row([float(d.timestamp), *b.center, b.half_length, b.half_width,
                              math.degrees(b.yaw), d.shape_class, d.n_points, *d.sensor_center, *corner]) + "\n")


def read_detections(path) -> list[dict]:
    out = []
    for _, line in _data_lines(path):
        p = line.split()
        out.append({"timestamp": float(p[0]), "center": np.array(p[1:3], dtype=float),
                    "half_length": float(p[3]), "half_width": float(p[4]), "yaw_deg": float(p[5]),
                    "shape": p[6], "n_points": int(p[7]), "sensor_center": np.array(p[8:11], dtype=float),
                    "corner": np.array(p[11:13], dtype=float)})
    return out


# key-value files (reports and configs)

def parse_key_values(path) -> dict[str, str]:
    """``key = value`` lines; repeated keys are an error."""
    values = {}
    for lineno, line in _data_lines(path):
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def report_lines(sensor_id: str, run, params_flat: dict) -> list[str]:
    lines = []
    res = run.result
    status = "ok" if res is not None else "failed"
    lines.append(f"{sensor_id}.status = {status}")
    if run.error:
        lines.append(f"{sensor_id}.error = {run.error}")
    if res is not None:
        lines.append(f"{sensor_id}.transform = {fmt_row(res.transform.to_record())}")
        e = rotation_to_euler(res.transform.rotation)
        lines.append(f"{sensor_id}.euler_deg = {fmt_row(e.as_tuple())}")
        lines.append(f"{sensor_id}.beta_diff_deg = {fmt(math.degrees(res.beta_diff))}")
        lines.append(f"{sensor_id}.translation_2d = {fmt_row(res.translation_2d)}")
        lines.append(f"{sensor_id}.pair_count = {res.pair_count}")
        lines.append(f"{sensor_id}.yaw_inlier_count = {res.yaw_inlier_count}")
        lines.append(f"{sensor_id}.rms_residual = {fmt(res.rms_residual)}")
    lines.append(f"{sensor_id}.frames_detected = {len(run.detections)}")
    lines.append(f"{sensor_id}.frames_skipped = {len(run.frame_errors)}")
    if run.background is not None:
        for key, value in run.background.diagnostics().items():
            lines.append(f"{sensor_id}.ground.{key} = {fmt(value)}")
    for key in sorted(params_flat):
        lines.append(f"{sensor_id}.param.{key} = {fmt(params_flat[key])}")
    return lines


def write_report(path, runs: dict, params_flat: dict) -> None:
    """Report for several sensors, ordered by sensor id."""
    lines = []
    for sensor_id in sorted(runs):
        lines.extend(report_lines(sensor_id, runs[sensor_id], params_flat))
    Path(path).write_text("\n".join(lines) + "\n")


def write_truth(path, transforms: dict) -> None:
    """Report-compatible file holding known transforms (for simulated sessions)."""
    lines = []
    for sensor_id in sorted(transforms):
        t = transforms[sensor_id]
        lines.append(f"{sensor_id}.status = ok")
        lines.append(f"{sensor_id}.transform = {fmt_row(t.to_record())}")
        lines.append(f"{sensor_id}.euler_deg = {fmt_row(rotation_to_euler(t.rotation).as_tuple())}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_report(path) -> dict[str, dict]:
    """Sensor id -> {key: value}; ``transform`` is parsed into a ``RigidTransform``."""
    out: dict[str, dict] = {}
    for key, value in parse_key_values(path).items():
        sensor_id, _, rest = key.partition(".")
        if not rest:
            raise ConfigError(f"{path}: key {key!r} has no sensor prefix")
        entry = out.setdefault(sensor_id, {})
        entry[rest] = RigidTransform.from_record(value.split()) if rest == "transform" else value
    return out


# session configs

@dataclass
class SensorInputs:
    background: list[str]
    drive: list[str]


@dataclass
class SessionConfig:
    sensors: dict[str, SensorInputs]
    trace: str
    output: str | None = None
    simulator: str | None = None
    overrides: dict[str, str] = field(default_factory=dict)
    base_dir: str = "."


SESSION_KEYS = {"session.trace", "session.output", "session.simulator"}
SENSOR_FIELDS = {"background", "drive"}


def _resolve(pattern: str, base: str) -> list[str]:
    """Whitespace-separated file names or glob patterns, relative to ``base``.

    A pattern may match nothing; a plain file name must exist.
    """
    out = []
    for item in pattern.split():
        full = item if os.path.isabs(item) else os.path.join(base, item)
        if glob.has_magic(full):
            out.extend(sorted(glob.glob(full)))
        elif os.path.isfile(full):
            out.append(full)
        else:
            raise ConfigError(f"no such file: {full}")
    return out


def load_session(path, param_keys) -> SessionConfig:
    """Parse a session config; unknown keys raise ``ConfigError``.

    ``param_keys`` lists the accepted ``section.key`` parameter names.
    """
    values = parse_key_values(path)
    base = os.path.dirname(os.path.abspath(path))
    sensors: dict[str, dict] = {}
    overrides, session = {}, {}
    for key, value in values.items():
        if key in SESSION_KEYS:
            session[key.split(".", 1)[1]] = value
        elif key.startswith("sensor."):
            parts = key.split(".")
            if len(parts) != 3 or parts[2] not in SENSOR_FIELDS or not parts[1]:
                raise ConfigError(f"unknown config key {key!r}")
            sensors.setdefault(parts[1], {})[parts[2]] = value
        elif key in param_keys:
            overrides[key] = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    if "trace" not in session:
        raise ConfigError("session.trace is required")
    if not sensors:
        raise ConfigError("no sensor.<id>.background / sensor.<id>.drive entries")
    inputs = {}
    for sensor_id, entry in sensors.items():
        missing = SENSOR_FIELDS - set(entry)
        if missing:
            raise ConfigError(f"sensor {sensor_id}: missing {', '.join(sorted(missing))}")
        inputs[sensor_id] = SensorInputs(_resolve(entry["background"], base), _resolve(entry["drive"], base))
    trace = session["trace"] if os.path.isabs(session["trace"]) else os.path.join(base, session["trace"])
    if not os.path.isfile(trace):
        raise ConfigError(f"no such trace file: {trace}")
    output = session.get("output")
    if output is not None and not os.path.isabs(output):
        output = os.path.join(base, output)
    return SessionConfig(inputs, trace, output, session.get("simulator"), overrides, base)
