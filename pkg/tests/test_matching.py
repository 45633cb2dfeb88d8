import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from civcal.errors import AllBelowThreshold, InsufficientOverlap, OutOfRange
from civcal.geometry import RigidTransform, apply, rot2d, rot_z, transform_from_pose
from civcal.lshape import OrientedBox2D
from civcal.matching import (Detection, MatchedPairs, SensorTrack, WorldTrace, build_matched_pairs,
                             compose_calibration, corner_centers, estimate_translation, estimate_yaw,
                             interpolate_world_position, match, reference_to_box_center, repetition_error)


def track_from(points, times, yaw=0.0):
    return SensorTrack(tuple(Detection(float(t), OrientedBox2D(np.asarray(p, float), 2.25, 0.9, yaw))
                             for p, t in zip(points, times)))


def pairs_from(sensor, world):
    sensor, world = np.asarray(sensor, float), np.asarray(world, float)
    return MatchedPairs(sensor, world, np.arange(len(sensor), dtype=float))


def straight(n=41, length=40.0):
    return np.column_stack([np.linspace(0, length, n), np.zeros(n)])


def test_interpolation():
    trace = WorldTrace([0.0, 1.0], [[0, 0], [2, 0]], np.radians([350.0, 10.0]))
    pos, heading = interpolate_world_position(trace, 0.5)
    assert np.allclose(pos, [1, 0])
    assert math.isclose(heading, 0.0, abs_tol=1e-12)
    with pytest.raises(OutOfRange):
        interpolate_world_position(trace, 1.5)
    with pytest.raises(OutOfRange):
        interpolate_world_position(trace, -0.1)
    assert np.allclose(interpolate_world_position(trace, 1.0)[0], [2, 0])


@pytest.mark.parametrize("offset,heading,expected", [((0, 0), 0.3, (5, 6)), ((1.5, 0), 0.0, (6.5, 6)),
                                                     ((1.5, 0), math.pi / 2, (5, 7.5))])
def test_reference_to_box_center(offset, heading, expected):
    assert np.allclose(reference_to_box_center((5, 6), heading, offset), expected)


def test_pair_counts():
    trace = WorldTrace(np.arange(0, 10.5, 0.5), np.zeros((21, 2)), np.zeros(21))
    inside = track_from(np.zeros((10, 2)), np.linspace(1, 9, 10))
    assert len(build_matched_pairs(inside, trace, "box")) == 10
    early = track_from(np.zeros((10, 2)), np.linspace(-3, 6, 10))
    assert len(build_matched_pairs(early, trace, "box")) == 7
    with pytest.raises(InsufficientOverlap):
        build_matched_pairs(track_from([[0, 0], [1, 1]], [5.0, 20.0]), trace, "box")
    with pytest.raises(ValueError):
        build_matched_pairs(inside, trace, "nearest")


def test_identical_traces_give_zero_yaw():
    pts = straight()
    assert estimate_yaw(pairs_from(pts, pts)) == 0.0


def test_rotated_trace():
    world = straight() + [3, 4]
    anchor = world[-1]
    sensor = (world - anchor) @ rot2d(math.radians(-30)).T + anchor
    assert math.isclose(math.degrees(estimate_yaw(pairs_from(sensor, world))), 30.0, abs_tol=1e-9)


def test_all_below_threshold():
    pts = straight(5, 2.0)
    with pytest.raises(AllBelowThreshold):
        estimate_yaw(pairs_from(pts, pts), 5.0)


def test_yaw_monte_carlo():
    rng = np.random.default_rng(31)
    truth = math.radians(17.0)
    errors = []
    for _ in range(100):
        world = straight()
        sensor = world @ rot2d(-truth).T + rng.normal(0, 0.1, world.shape)
        errors.append(estimate_yaw(pairs_from(sensor, world)) - truth)
    errors = np.degrees(np.abs(errors))
    assert errors.mean() < 0.3
    # the anchor's own noise enters every pair, so single seeds spread wider
    assert errors.max() < 1.2


def test_translation_examples():
    world = straight()
    assert np.allclose(estimate_translation(pairs_from(world - [10, 5], world), 0.0), [10, 5])
    assert np.allclose(estimate_translation(pairs_from([[1, 0]], [[0, 1]]), math.pi / 2), [0, 0], atol=1e-12)


def test_translation_monte_carlo():
    rng = np.random.default_rng(32)
    sigma, n = 0.1, 41
    world = straight(n)
    beta, t = 0.4, np.array([-12.0, 30.0])
    sensor = (world - t) @ rot2d(beta)  # inverse planar map
    bad = 0
    for _ in range(200):
        noisy = world + rng.normal(0, sigma, world.shape)
        est = estimate_translation(pairs_from(sensor, noisy), beta)
        bad += int(np.any(np.abs(est - t) > 2 * sigma / math.sqrt(n)))
    # each axis is outside two standard errors about 5% of the time
    assert bad < 0.2 * 200


def test_compose_calibration_examples():
    ident = compose_calibration(0.0, (0, 0), RigidTransform())
    assert ident.transform == RigidTransform()
    quarter = compose_calibration(math.pi / 2, (1, 0), RigidTransform())
    assert np.allclose(apply(quarter.transform, np.array([1.0, 0, 0])), [1, 1, 0])
    tilt = transform_from_pose(0, 5, -3, 0, 0, 6)
    res = compose_calibration(0.3, (2, 3), tilt)
    assert np.allclose(res.transform.rotation[:2, :2] @ np.eye(2), (rot_z(0.3) @ tilt.rotation)[:2, :2])
    assert math.isclose(res.transform.translation[2], tilt.translation[2])


def test_repetition_error():
    a = transform_from_pose(10, 2, -3, 1, 2, 3)
    assert repetition_error(a, a).as_tuple() == (0.0,) * 6
    b = RigidTransform(a.rotation, a.translation + [0.05, 0, 0])
    e = repetition_error(a, b)
    assert math.isclose(e.d_x, 0.05, abs_tol=1e-12) and e.d_y == e.d_z == e.d_psi1 == 0
    c = transform_from_pose(12, 1, -2, 0, 2, 3)
    assert repetition_error(a, c) == repetition_error(c, a)
    assert all(v >= 0 for v in repetition_error(a, c).as_tuple())


@settings(max_examples=50)
@given(st.floats(-math.pi, math.pi), st.floats(-100, 100), st.floats(-100, 100), st.floats(-math.pi, math.pi))
def test_yaw_translation_invariance_and_rotation_equivariance(beta, dx, dy, phi):
    rng = np.random.default_rng(0)
    world = straight() @ rot2d(0.7).T + rng.normal(0, 0.05, (41, 2))
    sensor = world @ rot2d(-beta).T
    base = estimate_yaw(pairs_from(sensor, world))
    shifted = estimate_yaw(pairs_from(sensor + [dx, dy], world + [-dy, dx]))
    assert abs(math.remainder(shifted - base, 2 * math.pi)) < 1e-9
    turned = estimate_yaw(pairs_from(sensor, world @ rot2d(phi).T))
    assert abs(math.remainder(turned - base - phi, 2 * math.pi)) < 1e-9


@settings(max_examples=30)
@given(st.floats(-50, 50), st.floats(-50, 50))
def test_sensor_shift_moves_translation(dx, dy):
    world = straight() @ rot2d(0.2).T + 1.0
    sensor = world @ rot2d(-0.5).T + [4, -2]
    pairs = pairs_from(sensor, world)
    beta = estimate_yaw(pairs)
    moved = pairs_from(sensor + [dx, dy], world)
    assert math.isclose(estimate_yaw(moved), beta, abs_tol=1e-9)
    expected = estimate_translation(pairs, beta) - rot2d(beta) @ [dx, dy]
    assert np.allclose(estimate_translation(moved, beta), expected, atol=1e-9)


def test_noise_free_pipeline_reproduces_world_centers():
    times = np.arange(0, 6, 0.1)
    world = np.column_stack([times * 8.0 - 20, np.full(len(times), 5.0)])
    truth_beta, truth_t = 0.9, np.array([100.0, -40.0])
    sensor = (world - truth_t) @ rot2d(truth_beta)
    trace = WorldTrace(times, world, np.zeros(len(times)))
    res = match(track_from(sensor, times), trace, RigidTransform(), center_mode="box")
    mapped = apply(res.transform, np.column_stack([sensor, np.zeros(len(sensor))]))
    assert np.max(np.abs(mapped[:, :2] - world)) < 1e-6
    assert res.pair_count == len(times) and res.rms_residual < 1e-9


def _visible_box(center, heading, sensor_xy, length=4.5, width=1.8):
    """Box spanning the two visible faces only, as the fit would return it at an oblique view."""
    fwd = np.array([math.cos(heading), math.sin(heading)])
    left = np.array([-fwd[1], fwd[0]])
    to_sensor = np.asarray(sensor_xy) - center
    sf, sl = math.copysign(1, to_sensor @ fwd), math.copysign(1, to_sensor @ left)
    corner = center + sf * 0.5 * length * fwd + sl * 0.5 * width * left
    # visible extent shrunk by a few points on the far ends
    far = corner - sf * 0.8 * length * fwd - sl * 0.7 * width * left
    mid = 0.5 * (corner + far)
    return OrientedBox2D(mid, 0.4 * length, 0.35 * width, heading % math.pi), corner


@pytest.mark.parametrize("heading", [0.0, 0.7, 2.5, -1.2])
def test_corner_centers_recover_true_center(heading):
    fwd = np.array([math.cos(heading), math.sin(heading)])
    centers = np.array([fwd * s + [3, -8] for s in np.linspace(-30, -5, 20)])
    dets = []
    for k, c in enumerate(centers):
        box, corner = _visible_box(c, heading, np.zeros(2))
        dets.append(Detection(float(k), box, corner))
    out = corner_centers(SensorTrack(tuple(dets)), 4.5, 1.8)
    assert np.allclose(out, centers, atol=1e-9)


def test_corner_centers_fall_back_to_box_center():
    boxes = [Detection(float(k), OrientedBox2D(np.array([k, 0.0]), 2.0, 1.0, 0.0)) for k in range(3)]
    assert np.allclose(corner_centers(SensorTrack(tuple(boxes)), 4.5, 1.8), [[0, 0], [1, 0], [2, 0]])


def test_track_and_trace_validation():
    with pytest.raises(ValueError):
        track_from([[0, 0], [1, 1]], [1.0, 1.0])
    with pytest.raises(ValueError):
        WorldTrace([0.0, 0.0], np.zeros((2, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        WorldTrace([0.0], np.zeros((1, 2)), np.zeros(1), vehicle_length=1.0, vehicle_width=2.0)
