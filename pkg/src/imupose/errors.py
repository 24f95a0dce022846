"""Exception and warning classes.

Every error carries an ``exit_code`` used by the command-line interface.
"""


class ImuPoseError(Exception):
    exit_code = 1


class DataFormatError(ImuPoseError):
    exit_code = 3


class BadHeader(DataFormatError):
    pass


class NonMonotoneTimestamps(DataFormatError):
    pass


class UnitMismatch(DataFormatError):
    pass


class ConfigError(DataFormatError, ValueError):
    pass


class CalibrationError(ImuPoseError):
    exit_code = 4


class TooFewSamples(CalibrationError):
    pass


class NotStationary(CalibrationError):
    pass


class DegenerateGravity(CalibrationError):
    pass


class FilterError(ImuPoseError):
    exit_code = 5


class NonMonotoneTime(FilterError):
    pass


class ExcessiveDt(FilterError):
    pass


class SingularInnovation(FilterError):
    pass


class WindowNotFull(FilterError):
    pass


class EvaluationError(ImuPoseError):
    exit_code = 6


class NoOverlap(EvaluationError):
    pass


class AlignmentNotStatic(EvaluationError):
    pass


class KinematicsError(ImuPoseError):
    exit_code = 7


class MissingAttitude(KinematicsError):
    def __init__(self, segment):
        super().__init__(f"no attitude for segment {segment!r}")
        self.segment = segment


class SimulationError(ImuPoseError):
    exit_code = 8


class InvalidSpec(SimulationError):
    pass


class MisalignedSpecs(SimulationError):
    pass


class CalibrationUnderexcited(UserWarning):
    """Hands-together recording does not rotate the arm segments enough."""


class OptimizerStalled(UserWarning):
    """Link-length search hit its pass budget before converging."""
