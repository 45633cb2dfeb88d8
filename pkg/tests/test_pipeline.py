import numpy as np
import pytest

from civcal import CalibrationParams, calibrate_sensor, repetition_error
from civcal.pipeline import learn_background
from civcal.simulator import LASERSCANNER_NOISE, drive_through_scene, simulate_background, simulate_drive


def test_flat_round_trip():
    params = CalibrationParams()
    assert CalibrationParams.from_flat(params.flat()) == params
    changed = CalibrationParams.from_flat({"lshape.delta_x": "0.3", "dbscan.min_points": "7",
                                           "matching.center_mode": "box"})
    assert changed.lshape.delta_x == 0.3 and changed.cluster.min_points == 7 and changed.center_mode == "box"
    with pytest.raises(KeyError):
        CalibrationParams.from_flat({"lshape.nope": 1})


def test_param_validation():
    with pytest.raises(ValueError):
        CalibrationParams(center_mode="nearest")
    with pytest.raises(ValueError):
        CalibrationParams(theta_beta=0)
    with pytest.raises(ValueError):
        CalibrationParams(margin=-1)


def test_background_model_finds_static_objects():
    cfg = drive_through_scene(9, LASERSCANNER_NOISE)
    model = learn_background([simulate_background(cfg).cloud])
    assert len(model.boxes) == len(cfg.background_objects)
    assert 4.0 < model.plane.mounting_height < 8.0


def test_box_center_mode_still_calibrates():
    cfg = drive_through_scene(2)
    frames, trace = simulate_drive(cfg)
    run = calibrate_sensor([simulate_background(cfg).cloud], [f.cloud for f in frames], trace,
                           CalibrationParams(center_mode="box"))
    err = repetition_error(run.result, cfg.true_extrinsic)
    assert max(err.as_tuple()[:3]) < 1e-3 and max(err.as_tuple()[3:]) < 1e-4


def test_failed_background_is_reported():
    run = calibrate_sensor([np.zeros((2, 3))], [], None)
    assert run.result is None and "DegenerateCloud" in run.error
