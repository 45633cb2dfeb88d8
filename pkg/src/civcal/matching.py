"""Model matching between sensor detections and the vehicle's world trace.

Detections live in the ground-aligned sensor frame, where only a planar
rotation and translation separate them from world coordinates.  The yaw
is the circular mean of the angles between anchored location vectors (each
trace referred to its last point); the translation is the mean residual
after that rotation.

The sensor-side reference point is by default the box center rebuilt from
the fitted corner and the vehicle's known length and width
(``center_mode="corner"``).  The corner is the intersection of the two
fitted lines and is far less noisy than the extent of the points, whose far
edges hang on a handful of extreme returns.  ``center_mode="box"`` uses the
fitted box center as is.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AllBelowThreshold, InsufficientOverlap, OutOfRange
from .geometry import RigidTransform, compose, rot2d, rotation_to_euler, wrap_angle, wrap_degrees

DEFAULT_THETA_BETA = 5.0
CENTER_MODES = ("corner", "box")
HEADING_WINDOW = 3  # detections on either side used to find the travel direction


@dataclass(frozen=True)
class TraceSample:
    timestamp: float
    position: np.ndarray
    heading: float
    speed: float | None = None


@dataclass(frozen=True)
class WorldTrace:
    """Vehicle poses as communicated by the vehicle itself.

    ``reference_offset`` goes from the communicated reference point to the
    geometric box center, expressed in the vehicle frame (x forward).
    """

    timestamps: np.ndarray
    positions: np.ndarray
    headings: np.ndarray
    vehicle_length: float = 4.5
    vehicle_width: float = 1.8
    reference_offset: np.ndarray = field(default_factory=lambda: np.zeros(2))
    speeds: np.ndarray | None = None

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=float).reshape(-1)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "headings", np.asarray(self.headings, dtype=float).reshape(-1))
        object.__setattr__(self, "reference_offset", np.asarray(self.reference_offset, dtype=float).reshape(2))
        if len(ts) > 1 and np.any(np.diff(ts) <= 0):
            raise ValueError("trace timestamps must be strictly increasing")
        if not len(ts) == len(self.positions) == len(self.headings):
            raise ValueError("trace arrays differ in length")
        if self.vehicle_length < self.vehicle_width:
            raise ValueError("vehicle length must not be smaller than its width")

    def __len__(self):
        return len(self.timestamps)

    def samples(self) -> list[TraceSample]:
        speeds = self.speeds if self.speeds is not None else [None] * len(self)
        return [TraceSample(float(t), p, float(h), s)
                for t, p, h, s in zip(self.timestamps, self.positions, self.headings, speeds)]


@dataclass(frozen=True)
class Detection:
    timestamp: float
    box: object  # OrientedBox2D in the ground-aligned frame
    corner: np.ndarray | None = None  # intersection of the fitted lines


@dataclass(frozen=True)
class SensorTrack:
    detections: tuple

    def __post_init__(self):
        dets = tuple(self.detections)
        ts = [d.timestamp for d in dets]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError("detection timestamps must be strictly increasing")
        object.__setattr__(self, "detections", dets)

    def __len__(self):
        return len(self.detections)


@dataclass(frozen=True)
class MatchedPairs:
    sensor_points: np.ndarray
    world_points: np.ndarray
    timestamps: np.ndarray

    @property
    def anchor(self) -> int:
        return len(self.timestamps) - 1

    def __len__(self):
        return len(self.timestamps)


@dataclass(frozen=True)
class CalibrationResult:
    transform: RigidTransform
    beta_diff: float
    translation_2d: np.ndarray
    pair_count: int
    yaw_inlier_count: int
    rms_residual: float
    ground: dict = field(default_factory=dict)


@dataclass(frozen=True)
class RepetitionError:
    """Absolute differences; angles in degrees, translations in meters."""

    d_psi1: float
    d_psi2: float
    d_psi3: float
    d_x: float
    d_y: float
    d_z: float

    def as_tuple(self):
        return (self.d_psi1, self.d_psi2, self.d_psi3, self.d_x, self.d_y, self.d_z)


def interpolate_world_position(trace: WorldTrace, t: float) -> tuple[np.ndarray, float]:
    """Linear position and shortest-arc heading interpolation at time ``t``."""
    ts = trace.timestamps
    if len(ts) == 0 or t < ts[0] or t > ts[-1]:
        raise OutOfRange(f"t={t} outside trace span")
    k = int(np.searchsorted(ts, t, side="right")) - 1
    if k >= len(ts) - 1:
        return trace.positions[-1].copy(), float(trace.headings[-1])
    w = (t - ts[k]) / (ts[k + 1] - ts[k])
    pos = (1.0 - w) * trace.positions[k] + w * trace.positions[k + 1]
    h0 = trace.headings[k]
    dh = float(wrap_angle(trace.headings[k + 1] - h0))
    return pos, float(wrap_angle(h0 + w * dh))


def reference_to_box_center(position, heading: float, offset) -> np.ndarray:
    return np.asarray(position, dtype=float) + rot2d(heading) @ np.asarray(offset, dtype=float)


def corner_centers(track: SensorTrack, length: float, width: float) -> np.ndarray:
    """Box centers completed from each detection's corner and the known dimensions.

    The forward axis is the box axis closest to the local travel direction
    (taken from neighbouring detections); the corner's side of the fitted
    box center decides which corner it is.  Detections without a corner, or
    a track too short to show a direction, keep their box center.
    """
    boxes = [d.box for d in track.detections]
    centers = np.array([b.center for b in boxes], dtype=float).reshape(-1, 2)
    out = centers.copy()
    n = len(centers)
    for j, det in enumerate(track.detections):
        if det.corner is None:
            continue
        travel = centers[min(j + HEADING_WINDOW, n - 1)] - centers[max(j - HEADING_WINDOW, 0)]
        if not np.any(travel):
            continue
        axes = [boxes[j].yaw + k * 0.5 * math.pi for k in range(4)]
        dirs = np.array([[math.cos(a), math.sin(a)] for a in axes])
        fwd = dirs[int(np.argmax(dirs @ travel))]
        left = np.array([-fwd[1], fwd[0]])
        rel = np.asarray(det.corner, dtype=float) - centers[j]
        offset = (0.5 * length * math.copysign(1.0, rel @ fwd), 0.5 * width * math.copysign(1.0, rel @ left))
        out[j] = det.corner - offset[0] * fwd - offset[1] * left
    return out


def build_matched_pairs(track: SensorTrack, trace: WorldTrace, center_mode: str = "corner") -> MatchedPairs:
    if center_mode not in CENTER_MODES:
        raise ValueError(f"center_mode must be one of {CENTER_MODES}")
    if center_mode == "corner":
        refs = corner_centers(track, trace.vehicle_length, trace.vehicle_width)
    else:
        refs = [np.asarray(d.box.center, dtype=float) for d in track.detections]
    sensor, world, times = [], [], []
    for det, ref in zip(track.detections, refs):
        try:
            pos, heading = interpolate_world_position(trace, det.timestamp)
        except OutOfRange:
            continue
        sensor.append(ref)
        world.append(reference_to_box_center(pos, heading, trace.reference_offset))
        times.append(det.timestamp)
    if len(times) < 2:
        raise InsufficientOverlap(f"only {len(times)} detection(s) inside the trace span")
    return MatchedPairs(np.array(sensor), np.array(world), np.array(times))


def yaw_angles(pairs: MatchedPairs, theta_beta: float = DEFAULT_THETA_BETA) -> np.ndarray:
    """Per-pair angles from anchored sensor vectors to anchored world vectors."""
    vs = pairs.sensor_points - pairs.sensor_points[pairs.anchor]
    vw = pairs.world_points - pairs.world_points[pairs.anchor]
    keep = (np.linalg.norm(vs, axis=1) >= theta_beta) & (np.linalg.norm(vw, axis=1) >= theta_beta)
    vs, vw = vs[keep], vw[keep]
    cross = vs[:, 0] * vw[:, 1] - vs[:, 1] * vw[:, 0]
    dot = np.sum(vs * vw, axis=1)
    return np.arctan2(cross, dot)


def estimate_yaw(pairs: MatchedPairs, theta_beta: float = DEFAULT_THETA_BETA) -> float:
    angles = yaw_angles(pairs, theta_beta)
    if len(angles) == 0:
        raise AllBelowThreshold(f"no location vector reaches theta_beta={theta_beta} m")
    return math.atan2(np.sin(angles).sum(), np.cos(angles).sum())


def estimate_translation(pairs: MatchedPairs, beta_diff: float) -> np.ndarray:
    r = rot2d(beta_diff)
    return np.mean(pairs.world_points - pairs.sensor_points @ r.T, axis=0)


def planar_transform(beta_diff: float, t) -> RigidTransform:
    """Rotation about z by ``beta_diff`` with translation ``(t_x, t_y, 0)``."""
    r = np.eye(3)
    r[:2, :2] = rot2d(beta_diff)
    return RigidTransform(r, (float(t[0]), float(t[1]), 0.0))


def compose_calibration(beta_diff: float, t, ground_align: RigidTransform,
                        pairs: MatchedPairs | None = None, theta_beta: float = DEFAULT_THETA_BETA,
                        ground: dict | None = None) -> CalibrationResult:
    transform = compose(planar_transform(beta_diff, t), ground_align)
    n_pairs, inliers, rms = 0, 0, 0.0
    if pairs is not None:
        n_pairs = len(pairs)
        inliers = len(yaw_angles(pairs, theta_beta))
        mapped = pairs.sensor_points @ rot2d(beta_diff).T + np.asarray(t)[:2]
        rms = float(np.sqrt(np.mean(np.sum((mapped - pairs.world_points) ** 2, axis=1))))
    return CalibrationResult(transform=transform, beta_diff=float(beta_diff),
                             translation_2d=np.asarray(t, dtype=float)[:2].copy(), pair_count=n_pairs,
                             yaw_inlier_count=inliers, rms_residual=rms, ground=dict(ground or {}))


def match(track: SensorTrack, trace: WorldTrace, ground_align: RigidTransform,
          theta_beta: float = DEFAULT_THETA_BETA, ground: dict | None = None,
          center_mode: str = "corner") -> CalibrationResult:
    """Pairs, yaw, translation and composition in one call."""
    pairs = build_matched_pairs(track, trace, center_mode)
    beta = estimate_yaw(pairs, theta_beta)
    t = estimate_translation(pairs, beta)
    return compose_calibration(beta, t, ground_align, pairs, theta_beta, ground)


def repetition_error(a, b) -> RepetitionError:
    """Component-wise absolute difference of two calibrations.

    Accepts ``CalibrationResult`` or ``RigidTransform`` arguments.
    """
    ta = getattr(a, "transform", a)
    tb = getattr(b, "transform", b)
    ea = np.array(rotation_to_euler(ta.rotation).as_tuple())
    eb = np.array(rotation_to_euler(tb.rotation).as_tuple())
    dpsi = np.abs(wrap_degrees(ea - eb))
    dt = np.abs(ta.translation - tb.translation)
    return RepetitionError(*(float(v) for v in dpsi), *(float(v) for v in dt))
