"""Vehicle isolation: background removal, DBSCAN clustering, 2D projection."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import NoVehicleDetected
from .geometry import PointCloud, RigidTransform, apply


@dataclass(frozen=True)
class ClusterParams:
    epsilon: float = 0.8
    min_points: int = 5

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.min_points < 1:
            raise ValueError("min_points must be >= 1")


@dataclass(frozen=True)
class Cluster:
    indices: np.ndarray

    @property
    def size(self) -> int:
        return len(self.indices)

    def __len__(self):
        return len(self.indices)


def neighbor_pairs(points: np.ndarray, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """All ordered index pairs ``(i, j)`` with ``|p_i - p_j| <= eps``, self pairs included."""
    n = len(points)
    if n == 0:
        return np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp)
    pairs = cKDTree(points).query_pairs(eps, output_type="ndarray")
    i, j = pairs[:, 0], pairs[:, 1]
    self_idx = np.arange(n)
    return np.concatenate([self_idx, i, j]), np.concatenate([self_idx, j, i])


def dbscan(points, params: ClusterParams | None = None) -> list[Cluster]:
    """Density-based clustering of 2D or 3D points.

    A point is core when at least ``min_points`` points (itself included)
    lie within ``epsilon``.  Core points connected through core neighbours
    form a cluster.  A border point joins the cluster of its nearest core
    neighbour, ties going to the lexicographically smallest core point, so
    the induced partition does not depend on input order.  Clusters are
    returned ordered by their smallest member index.
    """
    params = params or ClusterParams()
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return []
    pts = pts.reshape(len(pts), -1)
    n = len(pts)
    i, j = neighbor_pairs(pts, params.epsilon)
    counts = np.bincount(i, minlength=n)
    core = counts >= params.min_points
    if not core.any():
        return []

    cc = core[i] & core[j]
    graph = coo_matrix((np.ones(int(cc.sum())), (i[cc], j[cc])), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    labels = np.full(n, -1)
    labels[core] = comp[core]

    # border assignment: non-core i with a core neighbour j
    bmask = ~core[i] & core[j]
    if bmask.any():
        bi, bj = i[bmask], j[bmask]
        d2 = np.sum((pts[bi] - pts[bj]) ** 2, axis=1)
        # sort by (border index, distance, core coordinates) and keep the first per border point
        keys = [pts[bj][:, k] for k in reversed(range(pts.shape[1]))] + [d2, bi]
        sel = np.lexsort(keys)
        bi, bj = bi[sel], bj[sel]
        first = np.ones(len(bi), dtype=bool)
        first[1:] = bi[1:] != bi[:-1]
        labels[bi[first]] = comp[bj[first]]

    clusters = []
    for lab in np.unique(labels[labels >= 0]):
        clusters.append(Cluster(np.flatnonzero(labels == lab)))
    clusters.sort(key=lambda c: int(c.indices[0]))
    return clusters


def select_vehicle_cluster(clusters: list[Cluster]) -> Cluster:
    """Largest cluster; equal sizes resolve to the lowest minimum index."""
    if not clusters:
        raise NoVehicleDetected("no cluster found")
    return min(clusters, key=lambda c: (-c.size, int(c.indices.min())))


def project_to_ground(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    return pts[:, :2].copy()


def remove_ground_and_background(frame, alignment: RigidTransform, theta_g: float = 0.5,
                                 boxes=()) -> np.ndarray:
    """Points of ``frame`` that are neither ground nor known background.

    Returns the surviving points in the ground-aligned frame.
    """
    pts = frame.points if isinstance(frame, PointCloud) else np.asarray(frame, dtype=float).reshape(-1, 3)
    if len(pts) == 0:
        return np.empty((0, 3))
    aligned = apply(alignment, pts)
    aligned = aligned[aligned[:, 2] > theta_g]
    if len(aligned) == 0 or not boxes:
        return aligned
    drop = np.zeros(len(aligned), dtype=bool)
    for box in boxes:
        low = aligned[:, 2] <= box.max_height + box.margin
        if low.any():
            idx = np.flatnonzero(low & ~drop)
            drop[idx] = box.contains(aligned[idx, :2])
    return aligned[~drop]


def extract_vehicle(frame, alignment: RigidTransform, theta_g: float, boxes,
                    params: ClusterParams | None = None) -> np.ndarray:
    """Remaining points of the largest cluster, projected to 2D."""
    fg = remove_ground_and_background(frame, alignment, theta_g, boxes)
    clusters = dbscan(fg, params)
    best = select_vehicle_cluster(clusters)
    return project_to_ground(fg[best.indices])
