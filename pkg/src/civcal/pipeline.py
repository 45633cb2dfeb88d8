"""Per-sensor calibration: background learning, box detection, matching."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields

import numpy as np

from .background import (DEFAULT_MARGIN, DEFAULT_THETA_G, MIN_CLUSTER_SIZE, BackgroundBox,
                         extract_background_boxes, segment_by_height)
from .errors import CalibrationError
from .extraction import ClusterParams, extract_vehicle
from .geometry import PointCloud, RigidTransform, apply, invert
from .ground_plane import PlaneFitConfig, ground_alignment, refine_plane
from .lshape import LShapeParams, fit_vehicle_box
from .matching import CENTER_MODES, DEFAULT_THETA_BETA, CalibrationResult, Detection, SensorTrack, WorldTrace, match

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CalibrationParams:
    """Every tunable of the pipeline, addressable as ``section.key``."""

    ground: PlaneFitConfig = field(default_factory=PlaneFitConfig)
    cluster: ClusterParams = field(default_factory=ClusterParams)
    lshape: LShapeParams = field(default_factory=LShapeParams)
    theta_g: float = DEFAULT_THETA_G
    margin: float = DEFAULT_MARGIN
    min_cluster_size: int = MIN_CLUSTER_SIZE
    theta_beta: float = DEFAULT_THETA_BETA
    center_mode: str = "corner"

    def __post_init__(self):
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        if self.min_cluster_size < 1:
            raise ValueError("min_cluster_size must be >= 1")
        if not self.theta_beta > 0:
            raise ValueError("theta_beta must be positive")
        if self.center_mode not in CENTER_MODES:
            raise ValueError(f"center_mode must be one of {CENTER_MODES}")

    def flat(self) -> dict[str, float]:
        """Effective values keyed the same way as config overrides."""
        out = {}
        for section, obj in (("ground", self.ground), ("dbscan", self.cluster), ("lshape", self.lshape)):
            for f in fields(obj):
                out[f"{section}.{f.name}"] = getattr(obj, f.name)
        out["background.theta_g"] = self.theta_g
        out["background.margin"] = self.margin
        out["background.min_cluster_size"] = self.min_cluster_size
        out["matching.theta_beta"] = self.theta_beta
        out["matching.center_mode"] = self.center_mode
        return out

    @classmethod
    def from_flat(cls, values: dict) -> CalibrationParams:
        """Build from ``section.key`` values; unknown keys raise ``KeyError``."""
        known = cls().flat()
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise KeyError(", ".join(unknown))
        merged = {k: type(known[k])(values.get(k, known[k])) for k in known}
        sub = {"ground": {}, "dbscan": {}, "lshape": {}}
        for key, value in merged.items():
            section, name = key.split(".", 1)
            if section in sub:
                sub[section][name] = value
        return cls(ground=PlaneFitConfig(**sub["ground"]), cluster=ClusterParams(**sub["dbscan"]),
                   lshape=LShapeParams(**sub["lshape"]), theta_g=merged["background.theta_g"],
                   margin=merged["background.margin"],
                   min_cluster_size=merged["background.min_cluster_size"],
                   theta_beta=merged["matching.theta_beta"], center_mode=merged["matching.center_mode"])


@dataclass
class BackgroundModel:
    alignment: RigidTransform
    plane: object
    boxes: list[BackgroundBox]

    def diagnostics(self) -> dict:
        return {
            "iterations": self.plane.iterations,
            "retained_fraction": self.plane.retained_fraction,
            "rms_residual": self.plane.rms_residual,
            "mounting_height": self.plane.mounting_height,
            "background_boxes": len(self.boxes),
        }


@dataclass
class FrameDetection:
    timestamp: float
    box: object
    shape_class: str
    n_points: int
    sensor_center: np.ndarray  # box center mapped back into the raw sensor frame
    corner: np.ndarray | None = None


@dataclass
class SensorRun:
    background: BackgroundModel
    detections: list[FrameDetection]
    frame_errors: list[tuple[float, str]]
    result: CalibrationResult | None = None
    error: str | None = None


def _stack(frames) -> np.ndarray:
    parts = [f.points if isinstance(f, PointCloud) else np.asarray(f, dtype=float).reshape(-1, 3) for f in frames]
    return np.vstack(parts) if parts else np.empty((0, 3))


def learn_background(background_frames, params: CalibrationParams | None = None) -> BackgroundModel:
    """Ground plane, alignment and background boxes from empty-scene frames."""
    params = params or CalibrationParams()
    pts = _stack(background_frames)
    plane = refine_plane(pts, params.ground)
    align = ground_alignment(plane)
    seg = segment_by_height(apply(align, pts), params.theta_g)
    boxes = extract_background_boxes(seg.static_points, params.cluster, params.lshape,
                                     params.min_cluster_size, params.margin)
    return BackgroundModel(align, plane, boxes)


def detect_vehicle(frame: PointCloud, model: BackgroundModel, params: CalibrationParams) -> FrameDetection:
    flat = extract_vehicle(frame, model.alignment, params.theta_g, model.boxes, params.cluster)
    box, sol = fit_vehicle_box(flat, params.lshape)
    center = apply(invert(model.alignment), np.array([box.center[0], box.center[1], 0.0]))
    return FrameDetection(frame.timestamp, box, sol.shape_class, len(flat), center, sol.corner)


def calibrate_sensor(background_frames, drive_frames, trace: WorldTrace,
                     params: CalibrationParams | None = None, sensor_id: str = "sensor") -> SensorRun:
    """Run all four stages for one sensor.

    Frames in which no vehicle box can be fitted are skipped and listed in
    ``frame_errors``.  Errors from background learning or matching are
    caught and stored in ``error``; the run is returned either way.
    """
    params = params or CalibrationParams()
    try:
        model = learn_background(background_frames, params)
    except CalibrationError as exc:
        return SensorRun(None, [], [], None, f"{type(exc).__name__}: {exc} (sensor {sensor_id}, background)")

    detections, frame_errors = [], []
    for frame in drive_frames:
        try:
            detections.append(detect_vehicle(frame, model, params))
        except CalibrationError as exc:
            frame_errors.append((frame.timestamp, f"{type(exc).__name__}: {exc}"))
            log.debug("sensor %s frame %.3f skipped: %s", sensor_id, frame.timestamp, exc)

    run = SensorRun(model, detections, frame_errors)
    track = SensorTrack(tuple(Detection(d.timestamp, d.box, d.corner) for d in detections))
    try:
        run.result = match(track, trace, model.alignment, params.theta_beta, model.diagnostics(),
                           params.center_mode)
    except CalibrationError as exc:
        run.error = f"{type(exc).__name__}: {exc} (sensor {sensor_id})"
    return run
