"""Synthetic scenes with known extrinsics.

A flat ground (world ``z = 0``), a few static box-shaped objects and one
cooperative vehicle driving along a piecewise-linear path are sampled on
their sensor-facing surfaces and mapped into the sensor frame.  Noise is
applied along the sensor ray (range) and as a small tilt of the ray
direction (angle).  The vehicle also reports its own noisy pose trace on a
clock that is deliberately offset from the sensor's.

Limitations: only self-occlusion is modelled (a face is visible when it
faces the sensor), and roofs are not sampled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import PointCloud, RigidTransform, apply, invert, rot2d, transform_from_pose, wrap_angle
from .matching import WorldTrace

GROUND = 0
BACKGROUND = 100  # + object index
VEHICLE = 200  # + face index

LASERSCANNER_NOISE = {"range_sigma": 0.10, "angular_sigma": 0.5}
STEREO_NOISE = {"range_sigma": 0.60, "angular_sigma": 0.5}
TRACE_SIGMA = 0.02


@dataclass(frozen=True)
class BoxObject:
    """Upright box resting on the ground, given in world coordinates."""

    center: tuple[float, float]
    length: float
    width: float
    height: float
    yaw: float = 0.0  # radians


@dataclass(frozen=True)
class SceneConfig:
    # sensor -> world, i.e. the transform a perfect calibration returns
    true_extrinsic: RigidTransform = field(default_factory=RigidTransform)
    ground_extent: tuple[float, float, float, float] = (-40.0, 40.0, -40.0, 40.0)
    ground_spacing: float = 0.5
    max_range: float = 60.0
    background_objects: tuple[BoxObject, ...] = ()
    background_spacing: float = 0.2
    vehicle_length: float = 4.5
    vehicle_width: float = 1.8
    vehicle_height: float = 1.5
    face_spacing: float = 0.1
    # rows of (t, x, y, heading) giving the vehicle box center in the world
    path: tuple[tuple[float, float, float, float], ...] = ()
    reference_offset: tuple[float, float] = (0.0, 0.0)
    range_sigma: float = 0.0
    angular_sigma: float = 0.0  # degrees
    trace_sigma: float = 0.0
    frame_rate: float = 12.5
    trace_rate: float = 10.0
    trace_time_offset: float = 0.037
    seed: int = 0
    trace_seed: int | None = None

    def __post_init__(self):
        if self.frame_rate <= 0 or self.trace_rate <= 0:
            raise ValueError("rates must be positive")
        if min(self.range_sigma, self.angular_sigma, self.trace_sigma) < 0:
            raise ValueError("noise sigmas must be non-negative")
        ts = [p[0] for p in self.path]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("path timestamps must increase")
        if self.vehicle_length < self.vehicle_width:
            raise ValueError("vehicle length must not be smaller than its width")

    @property
    def sensor_position(self) -> np.ndarray:
        return self.true_extrinsic.translation


@dataclass(frozen=True)
class LabeledFrame:
    cloud: PointCloud
    labels: np.ndarray
    timestamp: float
    clean_points: np.ndarray | None = None  # sensor frame, before noise


def label_name(code: int) -> str:
    if code == GROUND:
        return "ground"
    if code >= VEHICLE:
        return f"vehicle-face-{code - VEHICLE}"
    return f"background-{code - BACKGROUND}"


def straight_path(start, end, speed: float, t0: float = 0.0):
    """Two-waypoint constant-speed path from ``start`` to ``end``."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    delta = end - start
    heading = math.atan2(delta[1], delta[0])
    duration = float(np.linalg.norm(delta)) / speed
    return ((t0, start[0], start[1], heading), (t0 + duration, end[0], end[1], heading))


def path_pose(path, t: float) -> tuple[np.ndarray, float]:
    rows = np.asarray(path, dtype=float)
    ts = rows[:, 0]
    t = min(max(t, ts[0]), ts[-1])
    k = min(int(np.searchsorted(ts, t, side="right")) - 1, len(ts) - 2)
    k = max(k, 0)
    if len(ts) == 1:
        return rows[0, 1:3].copy(), float(rows[0, 3])
    w = (t - ts[k]) / (ts[k + 1] - ts[k])
    pos = (1 - w) * rows[k, 1:3] + w * rows[k + 1, 1:3]
    dh = float(wrap_angle(rows[k + 1, 3] - rows[k, 3]))
    return pos, float(wrap_angle(rows[k, 3] + w * dh))


def _grid(lo, hi, spacing):
    n = int(math.floor((hi - lo) / spacing + 1e-9)) + 1
    return lo + spacing * np.arange(n)


def sample_ground(config: SceneConfig) -> np.ndarray:
    x0, x1, y0, y1 = config.ground_extent
    gx, gy = np.meshgrid(_grid(x0, x1, config.ground_spacing), _grid(y0, y1, config.ground_spacing))
    pts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(gx.size)])
    d = np.linalg.norm(pts[:, :2] - config.sensor_position[:2], axis=1)
    return pts[d <= config.max_range]


def box_faces(center, heading, length, width):
    """The four vertical faces as ``(face_center, outward_normal, half_span, along_dir)``."""
    r = rot2d(heading)
    fwd, left = r[:, 0], r[:, 1]
    c = np.asarray(center, dtype=float)
    hl, hw = 0.5 * length, 0.5 * width
    return [
        (c + hl * fwd, fwd, hw, left),      # 0 front
        (c + hw * left, left, hl, fwd),     # 1 left
        (c - hl * fwd, -fwd, hw, left),     # 2 rear
        (c - hw * left, -left, hl, fwd),    # 3 right
    ]


def visible_faces(center, heading, length, width, sensor_xy):
    out = []
    for k, (fc, normal, half, along) in enumerate(box_faces(center, heading, length, width)):
        if float(np.dot(np.asarray(sensor_xy) - fc, normal)) > 0:
            out.append((k, fc, normal, half, along))
    return out


def sample_box(center, heading, length, width, height, spacing, sensor_xy):
    """Points on the sensor-facing vertical faces and their face indices."""
    pts, faces = [], []
    nz = max(1, int(math.ceil(height / spacing)))
    zs = np.linspace(0.0, height, nz + 1)[1:]
    for k, fc, _, half, along in visible_faces(center, heading, length, width, sensor_xy):
        n = max(1, int(math.ceil(2 * half / spacing)))
        s = np.linspace(-half, half, n + 1)
        xy = fc[None, :] + s[:, None] * along[None, :]
        grid = np.repeat(xy, len(zs), axis=0)
        z = np.tile(zs, len(s))
        pts.append(np.column_stack([grid, z]))
        faces.append(np.full(len(grid), k))
    if not pts:
        return np.empty((0, 3)), np.empty(0, dtype=int)
    return np.vstack(pts), np.concatenate(faces)


def add_sensor_noise(points, range_sigma: float, angular_sigma_deg: float, rng) -> np.ndarray:
    """Radial Gaussian range error plus a Gaussian tilt of the ray direction."""
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if len(pts) == 0 or (range_sigma == 0 and angular_sigma_deg == 0):
        return pts.copy()
    r = np.linalg.norm(pts, axis=1)
    d = pts / r[:, None]
    # orthonormal pair perpendicular to each ray
    helper = np.where(np.abs(d[:, 2:3]) < 0.9, [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
    e1 = np.cross(d, helper)
    e1 /= np.linalg.norm(e1, axis=1)[:, None]
    e2 = np.cross(d, e1)
    sig = math.radians(angular_sigma_deg)
    a1 = rng.normal(0.0, sig, len(pts)) if sig > 0 else np.zeros(len(pts))
    a2 = rng.normal(0.0, sig, len(pts)) if sig > 0 else np.zeros(len(pts))
    dr = rng.normal(0.0, range_sigma, len(pts)) if range_sigma > 0 else np.zeros(len(pts))
    nd = d + np.tan(a1)[:, None] * e1 + np.tan(a2)[:, None] * e2
    nd /= np.linalg.norm(nd, axis=1)[:, None]
    return nd * (r + dr)[:, None]


def _static_scene(config: SceneConfig):
    sensor_xy = config.sensor_position[:2]
    parts = [sample_ground(config)]
    labels = [np.full(len(parts[0]), GROUND)]
    for k, obj in enumerate(config.background_objects):
        pts, _ = sample_box(obj.center, obj.yaw, obj.length, obj.width, obj.height,
                            config.background_spacing, sensor_xy)
        parts.append(pts)
        labels.append(np.full(len(pts), BACKGROUND + k))
    return np.vstack(parts), np.concatenate(labels)


def _to_sensor(config: SceneConfig, world_points, labels, timestamp, rng) -> LabeledFrame:
    clean = apply(invert(config.true_extrinsic), world_points)
    noisy = add_sensor_noise(clean, config.range_sigma, config.angular_sigma, rng)
    return LabeledFrame(PointCloud(noisy, "sensor", timestamp), labels, timestamp, clean)


def _seeds(config: SceneConfig, n_frames: int):
    children = np.random.SeedSequence(config.seed).spawn(n_frames + 1)
    trace_seed = config.seed if config.trace_seed is None else config.trace_seed
    trace_child = np.random.SeedSequence([trace_seed, 7919])
    return children, trace_child


def frame_times(config: SceneConfig) -> np.ndarray:
    if not config.path:
        return np.empty(0)
    t0, t1 = config.path[0][0], config.path[-1][0]
    return t0 + 0.5 / config.frame_rate + np.arange(int(math.floor((t1 - t0) * config.frame_rate))) / config.frame_rate


def simulate_background(config: SceneConfig) -> LabeledFrame:
    """Empty-scene scan: ground plus static objects."""
    world, labels = _static_scene(config)
    children, _ = _seeds(config, 0)
    return _to_sensor(config, world, labels, 0.0, np.random.default_rng(children[0]))


def vehicle_points(config: SceneConfig, t: float):
    pos, heading = path_pose(config.path, t)
    pts, faces = sample_box(pos, heading, config.vehicle_length, config.vehicle_width,
                            config.vehicle_height, config.face_spacing, config.sensor_position[:2])
    return pts, VEHICLE + faces


def simulate_trace(config: SceneConfig) -> WorldTrace:
    """Noisy reference-point positions at the vehicle's own clock."""
    if not config.path:
        return WorldTrace(np.empty(0), np.empty((0, 2)), np.empty(0), config.vehicle_length,
                          config.vehicle_width, config.reference_offset)
    t0, t1 = config.path[0][0], config.path[-1][0]
    dt = 1.0 / config.trace_rate
    start = t0 + (config.trace_time_offset % dt)
    times = np.concatenate([[t0], start + dt * np.arange(int(math.floor((t1 - start) / dt)) + 1), [t1]])
    times = np.unique(times[(times >= t0) & (times <= t1)])
    _, child = _seeds(config, 0)
    rng = np.random.default_rng(child)
    offset = np.asarray(config.reference_offset, dtype=float)
    positions, headings, speeds = [], [], []
    rows = np.asarray(config.path, dtype=float)
    for t in times:
        pos, heading = path_pose(config.path, t)
        positions.append(pos - rot2d(heading) @ offset)
        headings.append(heading)
        k = min(max(int(np.searchsorted(rows[:, 0], t, side="right")) - 1, 0), len(rows) - 2)
        seg = rows[k + 1, 1:3] - rows[k, 1:3]
        speeds.append(float(np.linalg.norm(seg) / (rows[k + 1, 0] - rows[k, 0])))
    positions = np.array(positions)
    if config.trace_sigma > 0:
        positions = positions + rng.normal(0.0, config.trace_sigma, positions.shape)
    return WorldTrace(times, positions, np.array(headings), config.vehicle_length, config.vehicle_width,
                      offset, np.array(speeds))


def simulate_drive(config: SceneConfig) -> tuple[list[LabeledFrame], WorldTrace]:
    """Drive frames (static scene plus vehicle) and the vehicle's trace."""
    static_world, static_labels = _static_scene(config)
    times = frame_times(config)
    children, _ = _seeds(config, len(times))
    frames = []
    for k, t in enumerate(times):
        vpts, vlab = vehicle_points(config, float(t))
        world = np.vstack([static_world, vpts])
        labels = np.concatenate([static_labels, vlab])
        frames.append(_to_sensor(config, world, labels, float(t), np.random.default_rng(children[k + 1])))
    return frames, simulate_trace(config)


def with_noise(config: SceneConfig, profile: dict, trace_sigma: float = TRACE_SIGMA, **changes) -> SceneConfig:
    return replace(config, range_sigma=profile["range_sigma"], angular_sigma=profile["angular_sigma"],
                   trace_sigma=trace_sigma, **changes)


def drive_through_scene(seed: int = 0, noise: dict | None = None, rng=None, lateral: float = 8.0,
                        start: float = -70.0, stop: float = -7.0, speed: float = 8.0, **changes) -> SceneConfig:
    """Random sensor pose with a corner-on approach drive.

    The extrinsic is drawn with yaw/pitch/roll up to 20/10/10 degrees, a
    horizontal position within 50 m and a mounting height of 4 to 8 m.  The
    vehicle drives straight toward the sensor on a lane ``lateral`` meters to
    its side, from ``start`` to ``stop`` meters along the lane (negative is
    before the sensor).  ``rng`` draws the geometry and defaults to one
    seeded with ``seed``; ``seed`` alone drives the measurement noise.
    """
    rng = np.random.default_rng(seed) if rng is None else rng
    yaw, pitch, roll = rng.uniform(-20, 20), rng.uniform(-10, 10), rng.uniform(-10, 10)
    tx, ty, tz = rng.uniform(-50, 50), rng.uniform(-50, 50), rng.uniform(4, 8)
    extrinsic = transform_from_pose(yaw, pitch, roll, tx, ty, tz)
    phi = rng.uniform(0, 2 * math.pi)
    d = np.array([math.cos(phi), math.sin(phi)])
    n = np.array([-d[1], d[0]])
    s = np.array([tx, ty])
    objects = (BoxObject(tuple(s + 25 * n + 5 * d), 10.0, 1.0, 3.0, phi),
               BoxObject(tuple(s - 15 * n - 10 * d), 2.0, 2.0, 2.5, 0.3))
    config = SceneConfig(true_extrinsic=extrinsic, ground_extent=(tx - 40, tx + 40, ty - 40, ty + 40),
                         background_objects=objects,
                         path=straight_path(s + start * d + lateral * n, s + stop * d + lateral * n, speed),
                         reference_offset=(-2.25, 0.0), seed=seed)
    if noise:
        config = with_noise(config, noise)
    return replace(config, **changes) if changes else config
