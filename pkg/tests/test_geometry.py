import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from civcal.geometry import (EulerAngles, PointCloud, RigidTransform, apply, compose, euler_to_rotation, invert,
                             rot_z, rotation_to_euler, transform_from_pose, wrap_angle, wrap_degrees)

from conftest import points3, random_transform, transforms


def close_transforms(a, b, tol=1e-9):
    return np.allclose(a.rotation, b.rotation, atol=tol) and np.allclose(a.translation, b.translation, atol=tol)


def test_apply_identity():
    assert np.array_equal(apply(RigidTransform.identity(), np.array([1.0, 2.0, 3.0])), [1, 2, 3])


def test_apply_rotation_and_translation():
    t = RigidTransform(rot_z(math.pi / 2), (1, 0, 0))
    assert np.allclose(apply(t, [1, 0, 0]), [1, 1, 0], atol=1e-12)


def test_apply_point_sets(rng):
    t = random_transform(rng)
    pts = rng.normal(size=(7, 3))
    stacked = apply(t, pts)
    assert stacked.shape == (7, 3)
    for p, q in zip(pts, stacked):
        assert np.allclose(apply(t, p), q)


def test_compose_identity_and_inverse(rng):
    t = random_transform(rng)
    assert close_transforms(compose(RigidTransform.identity(), t), t)
    assert close_transforms(compose(t, invert(t)), RigidTransform.identity())


def test_compose_z_rotations():
    a = RigidTransform(rot_z(math.radians(30)))
    b = RigidTransform(rot_z(math.radians(60)))
    assert np.allclose(compose(a, b).rotation, rot_z(math.pi / 2), atol=1e-12)


def test_matmul_is_compose(rng):
    a, b = random_transform(rng), random_transform(rng)
    assert close_transforms(a @ b, compose(a, b))


def test_invert_examples(rng):
    assert close_transforms(invert(RigidTransform.identity()), RigidTransform.identity())
    assert np.allclose(invert(RigidTransform(np.eye(3), (1, 2, 3))).translation, [-1, -2, -3])
    t = random_transform(rng)
    assert close_transforms(invert(invert(t)), t)


def test_rejects_non_rotation():
    with pytest.raises(ValueError):
        RigidTransform(np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        RigidTransform(np.eye(3) * 1.01)
    with pytest.raises(ValueError):
        RigidTransform(np.eye(3), (0, 0, np.nan))


def test_transform_is_immutable():
    t = RigidTransform()
    with pytest.raises(ValueError):
        t.rotation[0, 0] = 2.0


def test_record_roundtrip(rng):
    t = random_transform(rng)
    rec = t.to_record()
    assert len(rec) == 12
    assert RigidTransform.from_record(rec) == t
    assert np.allclose(t.matrix()[:3, :3].ravel(), rec[:9])
    with pytest.raises(ValueError):
        RigidTransform.from_record(rec[:11])


def test_from_matrix(rng):
    t = random_transform(rng)
    assert RigidTransform.from_matrix(t.matrix()) == t


def test_point_cloud_reshapes():
    cloud = PointCloud([1, 2, 3, 4, 5, 6], "s", 1.5)
    assert cloud.points.shape == (2, 3) and len(cloud) == 2


def test_euler_examples():
    assert rotation_to_euler(np.eye(3)).as_tuple() == (0.0, 0.0, 0.0)
    e = rotation_to_euler(rot_z(math.radians(45)))
    assert np.allclose(e.as_tuple(), (45, 0, 0))


def test_euler_gimbal_lock():
    r = euler_to_rotation(EulerAngles(30.0, 90.0, 0.0))
    e = rotation_to_euler(r)
    assert e.gimbal_lock and e.psi3 == 0.0
    assert np.allclose(euler_to_rotation(e), r, atol=1e-9)


def test_euler_random_roundtrip(rng):
    for _ in range(1000):
        triple = (rng.uniform(-180, 180), rng.uniform(-89, 89), rng.uniform(-180, 180))
        back = rotation_to_euler(euler_to_rotation(EulerAngles(*triple))).as_tuple()
        assert np.allclose(wrap_degrees(np.subtract(back, triple)), 0, atol=1e-9)


def test_wrapping():
    assert np.isclose(wrap_angle(3 * math.pi / 2), -math.pi / 2)
    assert wrap_degrees(190.0) == -170.0
    assert wrap_degrees(-180.0) == -180.0


@given(transforms(), points3, points3)
def test_rigidity(t, p, q):
    assert math.isclose(np.linalg.norm(apply(t, p) - apply(t, q)), np.linalg.norm(p - q), abs_tol=1e-9)


@given(transforms(), transforms(), transforms())
def test_associativity(a, b, c):
    assert close_transforms(compose(compose(a, b), c), compose(a, compose(b, c)), 1e-9)


@given(transforms(), points3)
def test_inverse_law(t, p):
    assert np.allclose(apply(invert(t), apply(t, p)), p, atol=1e-9)
    assert close_transforms(compose(invert(t), t), RigidTransform.identity())


@given(transforms(), transforms(), points3)
def test_compose_applies_right_first(a, b, p):
    assert np.allclose(apply(compose(a, b), p), apply(a, apply(b, p)), atol=1e-9)


@given(st.floats(-180, 180, exclude_max=True), st.floats(-88.9, 88.9), st.floats(-180, 180, exclude_max=True))
def test_euler_roundtrip_property(yaw, pitch, roll):
    back = rotation_to_euler(transform_from_pose(yaw, pitch, roll, 0, 0, 0).rotation)
    assert not back.gimbal_lock
    assert np.allclose(wrap_degrees(np.subtract(back.as_tuple(), (yaw, pitch, roll))), 0, atol=1e-8)
