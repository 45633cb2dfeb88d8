"""L-shape box fitting for 2D vehicle silhouettes.

The points are split into two legs ``P`` and ``Q`` by a beam heuristic:
the cluster is cut into x-slices of width ``delta_x``, the lowest point of
every slice is regressed to a probe line, and a histogram of the points'
positions along that line exposes the leg that stands across it.  Two
orthogonal lines are then fitted jointly by constrained least squares:

    P:  a1*x + a2*y + c1 = 0
    Q:  a1*y - a2*x + c2 = 0,      |(a1, a2)| = 1

Eliminating ``c`` leaves a 2x2 eigenproblem on the Schur complement of the
normal matrix.  The box is finally the min/max extent of the points along
the fitted orientation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateInput, SingularNormalMatrix
from .geometry import rot2d

L_SHAPE = "L"
I_OR_BOX = "I-or-box"
MIN_EXTENT = 1e-6
HALF_PI = 0.5 * math.pi
MAX_SEARCH_ROUNDS = 4
CANDIDATE_REFINE_ROUNDS = 3


@dataclass(frozen=True)
class LShapeParams:
    delta_x: float = 0.2
    theta_thresh: float = 0.15
    bin_width: float = 0.1
    flatness_ratio: float = 0.6

    def __post_init__(self):
        if min(self.delta_x, self.theta_thresh, self.bin_width, self.flatness_ratio) <= 0:
            raise ValueError("L-shape parameters must be positive")
        if self.flatness_ratio > 1:
            raise ValueError("flatness_ratio must be <= 1")



@dataclass(frozen=True)
class Partition:
    """Leg assignment of ``points``; ``set_p``/``set_q`` are index arrays."""

    points: np.ndarray
    set_p: np.ndarray
    set_q: np.ndarray
    probe: tuple[float, float]  # slope a, intercept b of y = a*x + b
    shape_class: str = L_SHAPE
    empty_beam_fraction: float = 0.0

    @property
    def p_points(self) -> np.ndarray:
        return self.points[self.set_p]

    @property
    def q_points(self) -> np.ndarray:
        return self.points[self.set_q]


@dataclass(frozen=True)
class LShapeSolution:
    alpha: np.ndarray
    c: np.ndarray
    corner: np.ndarray
    orientation: float  # direction of the Q line, in [0, pi/2)
    residual: float
    shape_class: str = L_SHAPE
    n_p: int = 0
    n_q: int = 0

    def signed_distances(self, points) -> np.ndarray:
        """Signed distances of ``points`` to the P line (col 0) and the Q line (col 1)."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        a1, a2 = self.alpha
        dp = pts[:, 0] * a1 + pts[:, 1] * a2 + self.c[0]
        dq = pts[:, 1] * a1 - pts[:, 0] * a2 + self.c[1]
        return np.column_stack([dp, dq])

    def line_distances(self, points) -> np.ndarray:
        """Unsigned distances of ``points`` to the P line (col 0) and the Q line (col 1)."""
        return np.abs(self.signed_distances(points))


@dataclass(frozen=True)
class OrientedBox2D:
    center: np.ndarray
    half_length: float
    half_width: float
    yaw: float  # direction of the length axis, in [0, pi)
    zero_extent: bool = False

    def corners(self) -> np.ndarray:
        """Counter-clockwise corner list."""
        r = rot2d(self.yaw)
        local = np.array([[1, -1], [1, 1], [-1, 1], [-1, -1]], dtype=float) * [self.half_length, self.half_width]
        return local @ r.T + self.center

    def contains(self, points, tol: float = 1e-9) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        local = (pts - self.center) @ rot2d(self.yaw)
        return (np.abs(local[:, 0]) <= self.half_length + tol) & (np.abs(local[:, 1]) <= self.half_width + tol)

    @property
    def area(self) -> float:
        return 4.0 * self.half_length * self.half_width


def _as_points2(points) -> np.ndarray:
    return np.asarray(points, dtype=float).reshape(-1, 2)


def _ols_line(x, y):
    """Least-squares slope and intercept of y over x; flat line when x has no spread."""
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    if len(x) < 2 or sxx <= 1e-18:
        return 0.0, float(y.min())
    a = float(np.sum((x - xm) * (y - ym)) / sxx)
    return a, float(ym - a * xm)


def partition_beams(points, params: LShapeParams | None = None) -> Partition:
    """Split a 2D cluster into legs P and Q with beams sent along +y."""
    params = params or LShapeParams()
    pts = _as_points2(points)
    if len(pts) < 2 or np.all(np.ptp(pts, axis=0) == 0):
        raise DegenerateInput("need at least two distinct points")
    x, y = pts[:, 0], pts[:, 1]
    xmin = x.min()
    n_beams = max(1, int(math.ceil((x.max() - xmin) / params.delta_x)))
    beam = np.minimum(((x - xmin) / params.delta_x).astype(np.int64), n_beams - 1)

    # closest reflection per beam: lowest y, then lowest index (lexsort is stable)
    order = np.lexsort((y, beam))
    first = np.ones(len(order), dtype=bool)
    first[1:] = beam[order][1:] != beam[order][:-1]
    closest = order[first]
    empty_fraction = 1.0 - len(closest) / n_beams
    a, b = _ols_line(x[closest], y[closest])

    # coordinates in the probe-line frame: along-line s, signed offset d
    norm = math.sqrt(1.0 + a * a)
    s = (x + a * (y - b)) / norm
    d = (y - a * x - b) / norm

    in_q = np.abs(d) <= params.theta_thresh
    hist_bin = ((s - s.min()) / params.bin_width).astype(np.int64)
    counts = np.bincount(hist_bin)
    top = counts.max()
    candidates = np.flatnonzero(counts == top)
    if len(candidates) > 1:
        anchor = np.array([xmin, a * xmin + b])
        mean_dist = [np.linalg.norm(pts[hist_bin == k] - anchor, axis=1).mean() for k in candidates]
        peak = int(candidates[int(np.argmin(mean_dist))])
    else:
        peak = int(candidates[0])
    ranked = np.sort(counts)[::-1]
    second = ranked[1] if len(ranked) > 1 else 0
    flat = second >= params.flatness_ratio * top

    if flat:
        # p = 1: the orientation comes from the Q regression alone
        shape_class = I_OR_BOX
        in_peak = np.flatnonzero(hist_bin == peak)
        p_idx = in_peak[np.argmax(np.abs(d[in_peak]))]
        set_p = np.array([p_idx])
        in_q[p_idx] = False
    else:
        shape_class = L_SHAPE
        s_peak = float(np.median(s[hist_bin == peak]))
        in_p = (np.abs(s - s_peak) <= params.theta_thresh) & ~in_q
        set_p = np.flatnonzero(in_p)
        if len(set_p) == 0:
            shape_class = I_OR_BOX
            in_peak = np.flatnonzero(hist_bin == peak)
            p_idx = in_peak[np.argmax(np.abs(d[in_peak]))]
            set_p = np.array([p_idx])
            in_q[p_idx] = False
    return Partition(points=pts, set_p=set_p, set_q=np.flatnonzero(in_q), probe=(a, b),
                     shape_class=shape_class, empty_beam_fraction=empty_fraction)


def design_matrix(p_points, q_points) -> np.ndarray:
    """Rows ``(1, 0, x, y)`` for P and ``(0, 1, y, -x)`` for Q; unknowns ``(c1, c2, a1, a2)``."""
    p = _as_points2(p_points)
    q = _as_points2(q_points)
    a = np.zeros((len(p) + len(q), 4))
    a[: len(p), 0] = 1.0
    a[: len(p), 2:] = p
    a[len(p):, 1] = 1.0
    a[len(p):, 2] = q[:, 1]
    a[len(p):, 3] = -q[:, 0]
    return a


def offsets_for(alpha, m11, m12) -> np.ndarray:
    """Optimal line offsets for a given unit normal: ``c = -M11^-1 M12 alpha``."""
    return -np.linalg.solve(m11, m12 @ alpha)


def _moment_matrix(n_p, n_q, sp, sq, pp, qq) -> np.ndarray:
    m = np.empty((4, 4))
    m[0, 0], m[0, 1], m[1, 1] = n_p, 0.0, n_q
    m[0, 2:] = sp
    m[1, 2:] = sq[1], -sq[0]
    m[2, 2] = pp[0, 0] + qq[1, 1]
    m[3, 3] = pp[1, 1] + qq[0, 0]
    m[2, 3] = pp[0, 1] - qq[0, 1]
    m[1, 0] = m[0, 1]
    m[2:, :2] = m[:2, 2:].T
    m[3, 2] = m[2, 3]
    return m


def normal_matrix(p_points, q_points) -> np.ndarray:
    """``M = A^T A`` assembled from moment sums (equal to ``design_matrix(...).T @ design_matrix(...)``)."""
    p = _as_points2(p_points)
    q = _as_points2(q_points)
    return _moment_matrix(len(p), len(q), p.sum(axis=0), q.sum(axis=0), p.T @ p, q.T @ q)


def _solve_moments(m: np.ndarray, shift, shape_class: str) -> LShapeSolution:
    """Line pair from the normal matrix of coordinates taken relative to ``shift``."""
    n_p, n_q = m[0, 0], m[1, 1]
    if n_p == 0 or n_q == 0 or n_p + n_q < 3:
        raise SingularNormalMatrix(f"both legs need points (|P|={n_p:.0f}, |Q|={n_q:.0f})")
    m11, m12, m22 = m[:2, :2], m[:2, 2:], m[2:, 2:]
    # M11 = diag(p, q), so its inverse is elementwise
    inv11 = np.array([1.0 / n_p, 1.0 / n_q])
    m_tilde = m22 - m12.T @ (inv11[:, None] * m12)
    a, b, d = m_tilde[0, 0], 0.5 * (m_tilde[0, 1] + m_tilde[1, 0]), m_tilde[1, 1]
    # closed-form 2x2 eigenproblem: the major axis sits at 0.5*atan2(2b, a-d)
    gap = math.hypot(a - d, 2.0 * b)
    if gap <= 1e-12 * max(0.5 * (a + d + gap), 1.0):
        raise SingularNormalMatrix("orientation is undetermined (degenerate legs)")
    minor = 0.5 * math.atan2(2.0 * b, a - d) + HALF_PI
    alpha = np.array([math.cos(minor), math.sin(minor)])
    # canonical sign: first nonzero component positive
    if alpha[0] < 0 or (alpha[0] == 0 and alpha[1] < 0):
        alpha = -alpha
    a1, a2 = alpha
    c_shifted = -inv11 * (m12 @ alpha)
    u = np.concatenate([c_shifted, alpha])
    residual = math.sqrt(max(float(u @ m @ u), 0.0) / (n_p + n_q))
    c = c_shifted - np.array([alpha @ shift, a1 * shift[1] - a2 * shift[0]])
    # P: a1 x + a2 y = -c1 ; Q: -a2 x + a1 y = -c2 ; the system matrix is a rotation
    corner = np.array([-a1 * c[0] + a2 * c[1], -a2 * c[0] - a1 * c[1]])
    orientation = math.atan2(a2, a1) % HALF_PI
    if orientation >= HALF_PI:  # float edge of the modulo
        orientation = 0.0
    return LShapeSolution(alpha=alpha, c=c, corner=corner, orientation=orientation,
                          residual=residual, shape_class=shape_class, n_p=int(n_p), n_q=int(n_q))


def _with_direct_residual(sol: LShapeSolution, p, q) -> LShapeSolution:
    # u^T M u loses about half the digits to cancellation; sum the distances instead
    d = np.concatenate([sol.signed_distances(p)[:, 0], sol.signed_distances(q)[:, 1]])
    return replace(sol, residual=float(np.sqrt(np.mean(d * d))))


def solve_orthogonal_lines(p_points, q_points, shape_class: str = L_SHAPE) -> LShapeSolution:
    """Jointly fit the orthogonal line pair to legs P and Q.

    Coordinates are centered on the common mean before the normal matrix is
    formed; the offsets are shifted back afterwards.
    """
    p = _as_points2(p_points)
    q = _as_points2(q_points)
    if len(p) == 0 or len(q) == 0 or len(p) + len(q) < 3:
        raise SingularNormalMatrix(f"both legs need points (|P|={len(p)}, |Q|={len(q)})")
    mean = (p.sum(axis=0) + q.sum(axis=0)) / (len(p) + len(q))
    sol = _solve_moments(normal_matrix(p - mean, q - mean), mean, shape_class)
    return _with_direct_residual(sol, p, q)


def fit_orthogonal_lines(partition: Partition) -> LShapeSolution:
    """Constrained orthogonal line pair through the legs of ``partition``."""
    return solve_orthogonal_lines(partition.p_points, partition.q_points, partition.shape_class)


def fit_box(points, orientation: float) -> OrientedBox2D:
    """Bounding box of ``points`` with its axes along ``orientation``.

    The longer side becomes the length axis.  Extents thinner than
    ``MIN_EXTENT`` are clamped and flagged via ``zero_extent``.
    """
    pts = _as_points2(points)
    if len(pts) == 0:
        raise DegenerateInput("fit_box needs at least one point")
    r = rot2d(orientation)
    local = pts @ r  # rotate by -orientation
    lo, hi = local.min(axis=0), local.max(axis=0)
    half = 0.5 * (hi - lo)
    center = r @ (0.5 * (hi + lo))
    yaw = orientation
    if half[1] > half[0]:
        half = half[::-1]
        yaw += HALF_PI
    zero = bool(half[1] < MIN_EXTENT)
    half = np.maximum(half, MIN_EXTENT)
    return OrientedBox2D(center=center, half_length=float(half[0]), half_width=float(half[1]),
                         yaw=float(yaw % math.pi), zero_extent=zero)


def _closeness(points, sol: LShapeSolution) -> float:
    return float(np.mean(np.min(sol.line_distances(points), axis=1) ** 2))


def refine_assignment(points, sol: LShapeSolution, params: LShapeParams, max_rounds: int = 10) -> LShapeSolution:
    """Reassign every point to its nearer fitted line and refit until stable.

    Points farther than the cutoff from both lines are left out.  The cutoff
    is ``theta_thresh`` or three robust standard deviations of the
    point-to-nearest-line distances, whichever is larger.
    """
    pts = _as_points2(points)
    shift = pts.mean(axis=0)
    x, y = (pts - shift).T
    # per-point moments: x, y, xx, yy, xy
    feats = np.column_stack([x, y, x * x, y * y, x * y])
    prev = used = None
    half = len(pts) // 2
    for _ in range(max_rounds):
        previous_orientation = sol.orientation
        a1, a2 = sol.alpha
        # offsets relative to the shifted origin
        c1 = sol.c[0] + a1 * shift[0] + a2 * shift[1]
        c2 = sol.c[1] + a1 * shift[1] - a2 * shift[0]
        dp = np.abs(a1 * x + a2 * y + c1)
        dq = np.abs(a1 * y - a2 * x + c2)
        nearest = np.minimum(dp, dq)
        cutoff = max(params.theta_thresh, 3.0 * 1.4826 * float(np.partition(nearest, half)[half]))
        near = nearest <= cutoff
        to_p = near & (dp < dq)
        to_q = near & ~to_p
        key = (to_p.tobytes(), to_q.tobytes())
        if key == prev:
            break
        prev = key
        n_p, n_q = int(to_p.sum()), int(to_q.sum())
        if n_p == 0 or n_q == 0:
            break
        mp = to_p.astype(float) @ feats
        mq = to_q.astype(float) @ feats
        m = _moment_matrix(n_p, n_q, mp[:2], mq[:2],
                           np.array([[mp[2], mp[4]], [mp[4], mp[3]]]),
                           np.array([[mq[2], mq[4]], [mq[4], mq[3]]]))
        try:
            sol = _solve_moments(m, shift, sol.shape_class)
        except SingularNormalMatrix:
            break
        used = (to_p, to_q)
        if abs(sol.orientation - previous_orientation) < 1e-9:
            break
    if used is not None:
        sol = _with_direct_residual(sol, pts[used[0]], pts[used[1]])
    return sol


def _rotate_solution(sol: LShapeSolution, angle: float) -> LShapeSolution:
    # lines n.x + c = 0 keep their offsets when the normals turn with the points
    r = rot2d(angle)
    alpha, c = r @ sol.alpha, sol.c
    if alpha[0] < 0 or (alpha[0] == 0 and alpha[1] < 0):
        alpha, c = -alpha, -c
    orientation = (sol.orientation + angle) % HALF_PI
    return replace(sol, alpha=alpha, c=c, corner=r @ sol.corner, orientation=orientation)


def _rotate_box(box: OrientedBox2D, angle: float) -> OrientedBox2D:
    return replace(box, center=rot2d(angle) @ box.center, yaw=float((box.yaw + angle) % math.pi))


def _rotated_partition(points, rotation: float, params: LShapeParams) -> Partition:
    """Partition in a frame rotated by ``-rotation``; indices refer to ``points``."""
    return partition_beams(points @ rot2d(rotation), params)


def fit_vehicle_box(points, params: LShapeParams | None = None,
                    beam_angle: float = 0.0) -> tuple[OrientedBox2D, LShapeSolution]:
    """Full box fit: beam partition, orthogonal line fit, bounding box.

    The beams are first sent along +y (and along the diagonal) of the input
    frame.  The best orientation found so far is then used to re-run the
    partition in the four frames where a fitted leg lies across the beams;
    this repeats until the best solution stops changing.  "Best" means the
    fitted line pair lies closest to all points.

    ``beam_angle`` turns the beam axis away from +y (counter-clockwise);
    the points are rotated into the beam frame and the results rotated back.
    """
    params = params or LShapeParams()
    pts = _as_points2(points)
    if len(pts) < 3:
        raise DegenerateInput("need at least three points")
    if beam_angle:
        box, sol = fit_vehicle_box(pts @ rot2d(beam_angle), params)
        return _rotate_box(box, beam_angle), _rotate_solution(sol, beam_angle)

    best, best_score = None, math.inf
    first_error = None
    seen = set()

    def consider(rotation):
        nonlocal best, best_score, first_error
        try:
            part = _rotated_partition(pts, rotation, params)
            key = (part.set_p.tobytes(), part.set_q.tobytes())
            if key in seen:
                return
            seen.add(key)
            sol = solve_orthogonal_lines(pts[part.set_p], pts[part.set_q], part.shape_class)
            sol = refine_assignment(pts, sol, params, CANDIDATE_REFINE_ROUNDS)
        except (SingularNormalMatrix, DegenerateInput) as exc:
            first_error = first_error or exc
            return
        score = _closeness(pts, sol)
        if score < best_score - 1e-15:
            best, best_score = sol, score

    consider(0.0)
    consider(0.5 * HALF_PI)
    for _ in range(MAX_SEARCH_ROUNDS):
        if best is None:
            break
        previous = best
        for k in range(4):
            consider(previous.orientation + k * HALF_PI)
        if best is previous:
            break
    if best is None:
        raise first_error
    best = refine_assignment(pts, best, params)
    return fit_box(pts, best.orientation), best
