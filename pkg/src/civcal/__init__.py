"""Extrinsic calibration of infrastructure 3D sensors using a cooperating vehicle."""
from .errors import CalibrationError
from .geometry import PointCloud, RigidTransform
from .matching import CalibrationResult, WorldTrace, repetition_error
from .pipeline import CalibrationParams, calibrate_sensor

__all__ = ["CalibrationError", "CalibrationParams", "CalibrationResult", "PointCloud", "RigidTransform",
           "WorldTrace", "calibrate_sensor", "repetition_error"]
__version__ = "0.1.0"
