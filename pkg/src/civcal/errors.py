"""Exception hierarchy shared by all calibration stages."""


class CalibrationError(Exception):
    """Base class for every error raised by civcal."""


class DegenerateCloud(CalibrationError):
    """Too few or collinear points, or no unique plane normal."""


class MalformedPolygon(CalibrationError):
    pass


class NoVehicleDetected(CalibrationError):
    pass


class DegenerateInput(CalibrationError):
    """Point set collapses to a single location."""


class SingularNormalMatrix(CalibrationError):
    """One leg of the L-shape partition is empty, so M11 cannot be inverted."""


class OutOfRange(CalibrationError):
    pass


class InsufficientOverlap(CalibrationError):
    """Fewer than two detections fall inside the world trace time span."""


class AllBelowThreshold(CalibrationError):
    """Every anchored location vector is shorter than theta_beta."""


class MismatchedSensors(CalibrationError):
    pass


class ConfigError(CalibrationError):
    pass
