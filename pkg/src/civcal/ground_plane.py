"""Ground plane estimation from an empty-scene scan.

The plane is found with a Karhunen-Loeve (principal component) fit of the
centered point matrix.  The left singular vectors give two in-plane axes and
the ground normal; ``ground_alignment`` turns that fit into the transform
that puts the ground at ``z = 0`` with the sensor above it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCloud
from .geometry import PointCloud, RigidTransform

# relative size of the second singular value below which the cloud is a line
RANK_TOL = 1e-9
# relative gap between the two smallest singular values treated as a tie
TIE_TOL = 1e-6


@dataclass(frozen=True)
class PlaneFitConfig:
    reject_distance: float = 0.3
    max_iterations: int = 5
    convergence_angle: float = 0.05  # degrees
    min_reject_distance: float = 1e-3

    def __post_init__(self):
        if not self.reject_distance > 0:
            raise ValueError("reject_distance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.convergence_angle > 0:
            raise ValueError("convergence_angle must be positive")
        if not 0 < self.min_reject_distance <= self.reject_distance:
            raise ValueError("min_reject_distance must lie in (0, reject_distance]")


@dataclass(frozen=True)
class PlaneFit:
    """Result of a ground plane fit.

    ``axes`` holds ``[v1, v2, n]`` as columns.  ``mounting_offset`` is
    ``-axes.T @ centroid``; its third entry is the sensor mounting height.
    The remaining fields are diagnostics filled in by :func:`refine_plane`.
    """

    axes: np.ndarray
    centroid: np.ndarray
    singular_values: np.ndarray
    mounting_offset: np.ndarray
    iterations: int = 0
    inliers: np.ndarray | None = None
    retained_fraction: float = 1.0
    rms_residual: float = 0.0

    @property
    def normal(self) -> np.ndarray:
        return self.axes[:, 2]

    @property
    def mounting_height(self) -> float:
        return float(self.mounting_offset[2])

    def distances(self, points) -> np.ndarray:
        """Signed off-plane distance of each point (positive on the sensor side)."""
        return (np.asarray(points, dtype=float) - self.centroid) @ self.normal


def _points(cloud) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.points
    return np.asarray(cloud, dtype=float).reshape(-1, 3)


def fit_plane_kl(cloud) -> PlaneFit:
    """Single-pass Karhunen-Loeve plane fit.

    Raises
    ------
    DegenerateCloud
        Fewer than 3 points, collinear points, or an isotropic cloud whose
        normal direction is not unique.
    """
    pts = _points(cloud)
    if len(pts) < 3:
        raise DegenerateCloud(f"need at least 3 points, got {len(pts)}")
    centroid = pts.mean(axis=0)
    centered = (pts - centroid).T  # 3 x N, as in the column-per-point layout
    v, s, _ = np.linalg.svd(centered, full_matrices=False)
    if s[0] == 0 or s[1] <= RANK_TOL * s[0]:
        raise DegenerateCloud("points are collinear or coincident")
    if s[1] - s[2] <= TIE_TOL * s[1]:
        raise DegenerateCloud("no unique plane normal (isotropic point spread)")

    v = v.copy()
    # sensor origin must end up above the ground: (0,0,0) maps to z = -n . centroid
    if v[:, 2] @ centroid > 0:
        v[:, 2] *= -1
    if np.linalg.det(v) < 0:
        v[:, 1] *= -1
    offset = -v.T @ centroid
    return PlaneFit(axes=v, centroid=centroid, singular_values=s, mounting_offset=offset,
                    inliers=np.ones(len(pts), dtype=bool), rms_residual=float(s[2] / math.sqrt(len(pts))))


def _normal_angle(a: np.ndarray, b: np.ndarray) -> float:
    c = abs(float(a @ b))
    return math.degrees(math.acos(min(1.0, c)))


def refine_plane(cloud, cfg: PlaneFitConfig | None = None) -> PlaneFit:
    """Iteratively refit the plane on points close to the previous estimate.

    Each pass keeps points whose unsigned distance to the current plane is
    within a cutoff, then refits on them.  The cutoff is the configured
    ``reject_distance`` capped by three robust standard deviations of the
    kept residuals (never below ``min_reject_distance``), so clean data gets
    a tight band and noisy data the configured one.  Iteration stops once the
    kept set no longer changes and the normal moved by less than
    ``convergence_angle``, or after ``max_iterations`` refits.
    """
    cfg = cfg or PlaneFitConfig()
    pts = _points(cloud)
    fit = fit_plane_kl(pts)
    keep = np.ones(len(pts), dtype=bool)
    iterations = 0
    for iterations in range(1, cfg.max_iterations + 1):
        dist = np.abs(fit.distances(pts))
        mad = np.median(np.abs(dist[keep]))
        cutoff = min(cfg.reject_distance, max(3.0 * 1.4826 * mad, cfg.min_reject_distance))
        new_keep = dist <= cutoff
        if new_keep.sum() < 3:
            raise DegenerateCloud("plane refinement rejected nearly all points")
        new_fit = fit_plane_kl(pts[new_keep])
        moved = _normal_angle(fit.normal, new_fit.normal)
        unchanged = np.array_equal(new_keep, keep)
        fit, keep = new_fit, new_keep
        if unchanged and moved < cfg.convergence_angle:
            break

    return PlaneFit(axes=fit.axes, centroid=fit.centroid, singular_values=fit.singular_values,
                    mounting_offset=fit.mounting_offset, iterations=iterations, inliers=keep,
                    retained_fraction=float(keep.mean()), rms_residual=fit.rms_residual)


def ground_alignment(fit: PlaneFit) -> RigidTransform:
    """Transform from the sensor frame into the ground-aligned frame.

    Rotation is ``V^T``; translation is ``(0, 0, h)`` with ``h`` the
    mounting height, so the in-plane offset is left for model matching.
    """
    return RigidTransform(fit.axes.T, (0.0, 0.0, fit.mounting_height))
