"""Input validation helpers shared by the estimators."""

import numpy as np
from sklearn.utils.validation import check_array

from .errors import ExcessiveDt, NonMonotoneTime

STREAM_COLUMNS = ("t", "wx", "wy", "wz", "ax", "ay", "az")
MAX_DT = 0.1


def check_stream(X, min_samples=1):
    """Validate an IMU stream.

    A stream is an ``(n, 7)`` array with columns ``t, wx, wy, wz, ax, ay, az``
    (seconds, rad/s, g).  A sequence of :class:`~imupose.imu.ImuSample` is
    accepted too.
    """
    if len(X) and hasattr(X[0], "gyro"):
        X = np.array([[s.t, *s.gyro, *s.accel] for s in X], dtype=float)
    X = check_array(X, dtype=np.float64, ensure_min_samples=min_samples)
    if X.shape[1] != len(STREAM_COLUMNS):
        raise ValueError(f"expected {len(STREAM_COLUMNS)} columns {STREAM_COLUMNS}, got {X.shape[1]}")
    return X


def check_timing(t, max_dt=MAX_DT):
    """Raise unless ``t`` is strictly increasing with steps of at most ``max_dt``."""
    dt = np.diff(t)
    if np.any(dt <= 0):
        k = int(np.argmax(dt <= 0)) + 1
        raise NonMonotoneTime(f"timestamp {t[k]!r} at row {k} does not advance")
    if np.any(dt > max_dt):
        k = int(np.argmax(dt > max_dt)) + 1
        raise ExcessiveDt(f"gap of {dt[k - 1]:.4f} s before row {k} exceeds {max_dt} s")
    return dt


def check_quaternions(Q):
    Q = check_array(Q, dtype=np.float64)
    if Q.shape[1] != 4:
        raise ValueError(f"expected (n, 4) quaternions, got shape {Q.shape}")
    return Q / np.linalg.norm(Q, axis=1, keepdims=True)
