"""Magnetometer-free IMU attitude estimation and upper-body tracking."""

from .baselines import GDC, NCF
from .errors import ImuPoseError
from .imu import ImuSample, NoiseParams, SensorCalibration, calibrate_stationary
from .kinematics import (
    AnthropometricPriors,
    BodyModel,
    LinkLengthCalibrator,
    UpperBodyTracker,
    calibrate_link_lengths,
    forward_kinematics,
)
from .metrics import ErrorReport, evaluate_attitude
from .sim import Phase, TrajectorySpec, generate, generate_body
from .smekf import SMEKF, FilterResult

__all__ = [
    "AnthropometricPriors",
    "BodyModel",
    "ErrorReport",
    "FilterResult",
    "GDC",
    "ImuPoseError",
    "ImuSample",
    "LinkLengthCalibrator",
    "NCF",
    "NoiseParams",
    "Phase",
    "SMEKF",
    "SensorCalibration",
    "TrajectorySpec",
    "UpperBodyTracker",
    "calibrate_link_lengths",
    "calibrate_stationary",
    "evaluate_attitude",
    "forward_kinematics",
    "generate",
    "generate_body",
]
