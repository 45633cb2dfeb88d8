"""Background learning: ground/static split and 2D background polygons."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CalibrationError, MalformedPolygon
from .extraction import ClusterParams, dbscan, project_to_ground
from .lshape import LShapeParams, fit_box, fit_vehicle_box

DEFAULT_THETA_G = 0.5
DEFAULT_MARGIN = 0.2
MIN_CLUSTER_SIZE = 10
EDGE_TOL = 1e-9


@dataclass(frozen=True)
class HeightSegmentation:
    ground_points: np.ndarray
    static_points: np.ndarray
    theta_g: float
    ground_mask: np.ndarray


def segment_by_height(aligned, theta_g: float = DEFAULT_THETA_G) -> HeightSegmentation:
    """Ground is everything with ``z <= theta_g`` in the ground-aligned frame."""
    pts = getattr(aligned, "points", aligned)
    pts = np.asarray(pts, dtype=float).reshape(-1, 3)
    mask = pts[:, 2] <= theta_g
    return HeightSegmentation(pts[mask], pts[~mask], theta_g, mask)


def _check_polygon(polygon) -> np.ndarray:
    poly = np.asarray(polygon, dtype=float).reshape(-1, 2)
    if len(poly) < 3:
        raise MalformedPolygon(f"polygon needs at least 3 vertices, got {len(poly)}")
    return poly


def segment_distances(points, polygon) -> np.ndarray:
    """Distance of each point to the closest polygon edge, shape ``(M,)``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    a = polygon
    b = np.roll(polygon, -1, axis=0)
    ab = b - a
    ap = pts[:, None, :] - a[None, :, :]
    denom = np.sum(ab * ab, axis=1)
    t = np.clip(np.sum(ap * ab[None], axis=2) / np.where(denom > 0, denom, 1.0), 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.sqrt(np.min(np.sum((pts[:, None, :] - closest) ** 2, axis=2), axis=1))


def points_in_polygon(points, polygon, tol: float = EDGE_TOL) -> np.ndarray:
    """Vectorised crossing-number test; points on an edge count as inside."""
    poly = _check_polygon(polygon)
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        return np.zeros(0, dtype=bool)
    px, py = pts[:, 0:1], pts[:, 1:2]
    ax, ay = poly[:, 0], poly[:, 1]
    bx, by = np.roll(ax, -1), np.roll(ay, -1)
    straddle = (ay > py) != (by > py)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = ax + (py - ay) * (bx - ax) / (by - ay)
    crossings = np.sum(straddle & (px < x_cross), axis=1)
    inside = (crossings % 2) == 1
    return inside | (segment_distances(pts, poly) <= tol)


def point_in_polygon(p, polygon) -> bool:
    return bool(points_in_polygon(np.asarray(p, dtype=float).reshape(1, 2), polygon)[0])


def is_counter_clockwise(polygon) -> bool:
    poly = np.asarray(polygon, dtype=float)
    x, y = poly[:, 0], poly[:, 1]
    return float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y)) > 0


@dataclass(frozen=True)
class BackgroundBox:
    """Footprint polygon of a static object in the ground-aligned frame.

    Membership uses the polygon grown by ``margin`` (round joins): a point
    belongs if it is inside the polygon or within ``margin`` of an edge.
    """

    polygon: np.ndarray
    max_height: float
    margin: float = DEFAULT_MARGIN

    def __post_init__(self):
        poly = _check_polygon(self.polygon)
        if not is_counter_clockwise(poly):
            poly = poly[::-1]
        object.__setattr__(self, "polygon", poly)

    def contains(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        inside = points_in_polygon(pts, self.polygon)
        if self.margin > 0 and not inside.all():
            rest = ~inside
            inside[rest] = segment_distances(pts[rest], self.polygon) <= self.margin
        return inside


def extract_background_boxes(static_points, cluster_params: ClusterParams | None = None,
                             lshape_params: LShapeParams | None = None,
                             min_cluster_size: int = MIN_CLUSTER_SIZE,
                             margin: float = DEFAULT_MARGIN) -> list[BackgroundBox]:
    """Cluster the static points and fit one box per cluster."""
    pts = np.asarray(static_points, dtype=float).reshape(-1, 3)
    boxes = []
    for cluster in dbscan(pts, cluster_params):
        if cluster.size < min_cluster_size:
            continue
        members = pts[cluster.indices]
        flat = project_to_ground(members)
        try:
            box, _ = fit_vehicle_box(flat, lshape_params)
        except CalibrationError:
            box = fit_box(flat, 0.0)
        boxes.append(BackgroundBox(box.corners(), float(members[:, 2].max()), margin))
    return boxes
