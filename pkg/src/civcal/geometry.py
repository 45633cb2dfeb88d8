"""Rigid transforms, Euler angles and point-cloud containers.

Points are carried as numpy arrays: a single point is shape ``(3,)`` and a
set of points is ``(N, 3)``.  2D points follow the same layout with two
columns.  All transforms map a point ``p`` in the source frame to
``R @ p + t`` in the target frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ORTHO_TOL = 1e-9
GIMBAL_TOL = 1e-9


@dataclass(frozen=True)
class PointCloud:
    """One sensor frame: ``points`` is an ``(N, 3)`` array in ``frame_id``."""

    points: np.ndarray
    frame_id: str = "sensor"
    timestamp: float = 0.0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)

    def __len__(self):
        return len(self.points)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("transform entries must be finite")
        if np.max(np.abs(r @ r.T - np.eye(3))) > ORTHO_TOL or abs(np.linalg.det(r) - 1.0) > ORTHO_TOL:
            raise ValueError("rotation must be orthonormal with det +1")
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls()

    @classmethod
    def from_matrix(cls, m) -> RigidTransform:
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    def matrix(self) -> np.ndarray:
        """Homogeneous 4x4 form."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def to_record(self) -> list[float]:
        """12 numbers: row-major rotation followed by the translation."""
        return [float(v) for v in self.rotation.ravel()] + [float(v) for v in self.translation]

    @classmethod
    def from_record(cls, values) -> RigidTransform:
        values = [float(v) for v in values]
        if len(values) != 12:
            raise ValueError(f"transform record needs 12 numbers, got {len(values)}")
        return cls(np.reshape(values[:9], (3, 3)), values[9:])

    def __matmul__(self, other: RigidTransform) -> RigidTransform:
        return compose(self, other)

    def __eq__(self, other):
        if not isinstance(other, RigidTransform):
            return NotImplemented
        return bool(np.array_equal(self.rotation, other.rotation) and np.array_equal(self.translation, other.translation))

    def __hash__(self):
        return hash((self.rotation.tobytes(), self.translation.tobytes()))


def apply(t: RigidTransform, p) -> np.ndarray:
    """Map a point ``(3,)`` or a point set ``(N, 3)`` through ``t``."""
    p = np.asarray(p, dtype=float)
    return p @ t.rotation.T + t.translation


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Transform that applies ``b`` first, then ``a``."""
    r = a.rotation @ b.rotation
    return RigidTransform(_reorthonormalize(r), a.rotation @ b.translation + a.translation)


def invert(t: RigidTransform) -> RigidTransform:
    rt = t.rotation.T
    return RigidTransform(rt, -rt @ t.translation)


def _reorthonormalize(r):
    # keeps long chains of products inside the 1e-9 validity band
    u, _, vt = np.linalg.svd(r)
    q = u @ vt
    if np.linalg.det(q) < 0:
        u[:, -1] *= -1
        q = u @ vt
    return q


def rot_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rot2d(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class EulerAngles:
    """Intrinsic Z-Y-X (yaw, pitch, roll) angles in degrees.

    ``gimbal_lock`` is set when ``|cos(psi2)|`` is below tolerance; ``psi3``
    is then pinned to zero and ``psi1`` absorbs the remaining rotation.
    """

    psi1: float
    psi2: float
    psi3: float
    gimbal_lock: bool = False

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.psi1, self.psi2, self.psi3)


def euler_to_rotation(e: EulerAngles) -> np.ndarray:
    yaw, pitch, roll = (math.radians(v) for v in e.as_tuple())
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def rotation_to_euler(r) -> EulerAngles:
    r = np.asarray(r, dtype=float)
    sp = -r[2, 0]
    sp = min(1.0, max(-1.0, sp))
    cp = math.hypot(r[0, 0], r[1, 0])
    pitch = math.atan2(sp, cp)
    if cp < GIMBAL_TOL:
        yaw = math.atan2(-r[0, 1], r[1, 1])
        return EulerAngles(math.degrees(yaw), math.degrees(pitch), 0.0, gimbal_lock=True)
    yaw = math.atan2(r[1, 0], r[0, 0])
    roll = math.atan2(r[2, 1], r[2, 2])
    return EulerAngles(math.degrees(yaw), math.degrees(pitch), math.degrees(roll))


def transform_from_pose(yaw_deg, pitch_deg, roll_deg, x, y, z) -> RigidTransform:
    """Build a transform from Z-Y-X Euler angles (degrees) and a translation."""
    r = euler_to_rotation(EulerAngles(yaw_deg, pitch_deg, roll_deg))
    return RigidTransform(r, (x, y, z))


def wrap_angle(a):
    """Wrap radians to ``[-pi, pi)``."""
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def wrap_degrees(a):
    return (np.asarray(a) + 180.0) % 360.0 - 180.0
