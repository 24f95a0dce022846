"""Magnetometer-free comparison filters.

* NCF: explicit nonlinear complementary filter (Mahony et al.) with
  proportional and integral feedback from the accelerometer.
* GDC: gradient-descent orientation filter (Madgwick) in its IMU-only form.

Both consume the same streams and produce the same :class:`FilterResult` as
:class:`~imupose.smekf.SMEKF`, so the evaluation code does not care which one
ran.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from . import quat
from ._validation import MAX_DT
from .errors import ExcessiveDt
from .smekf import FilterResult, _AttitudeFilter, _as_sample


GRADIENT_FLOOR = 1e-12


@dataclass(frozen=True)
class NcfState:
    q: np.ndarray
    bias: np.ndarray
    kp: float = 1.0
    ki: float = 0.3


@dataclass(frozen=True)
class GdcState:
    q: np.ndarray
    beta_gain: float = 0.1


@njit(cache=True)
def _unit(v):
    n = np.sqrt(v[0] ** 2 + v[1] ** 2 + v[2] ** 2)
    if n == 0.0:
        return v.copy()
    return v / n


@njit(cache=True)
def _ncf(q, bias, gyro, accel, dt, kp, ki):
    err = np.cross(_unit(accel), quat.gravity_in_body(q))
    bias = bias - ki * err * dt
    w = gyro - bias + kp * err
    return quat.quat_mul(q, quat.exp_rotation(w * dt)), bias


@njit(cache=True)
def gdc_gradient(q, accel):
    """Gradient of ½‖A(q)ᵀg - â‖² with respect to the quaternion components."""
    w, x, y, z = q[0], q[1], q[2], q[3]
    f = quat.gravity_in_body(q) - _unit(accel)
    J = np.array(
        [
            [-2.0 * y, 2.0 * z, -2.0 * w, 2.0 * x],
            [2.0 * x, 2.0 * w, 2.0 * z, 2.0 * y],
            [0.0, -4.0 * x, -4.0 * y, 0.0],
        ]
    )
    return J.T @ f


@njit(cache=True)
def _gdc(q, gyro, accel, dt, beta):
    grad = gdc_gradient(q, accel)
    n = np.sqrt(np.sum(grad * grad))
    qdot = 0.5 * quat._raw_mul(q, quat.pure_quat(gyro))
    # normalising round-off would turn it into a full-size step
    if n > GRADIENT_FLOOR:
        qdot = qdot - beta * grad / n
    return quat.normalize(q + qdot * dt)


@njit(cache=True)
def _run_ncf(t, gyro, accel, q0, b0, kp, ki):
    n = t.shape[0]
    qs = np.empty((n, 4))
    bs = np.empty((n, 3))
    q, b = q0.copy(), b0.copy()
    qs[0], bs[0] = q, b
    for k in range(1, n):
        q, b = _ncf(q, b, gyro[k], accel[k], t[k] - t[k - 1], kp, ki)
        qs[k], bs[k] = q, b
    return qs, bs


@njit(cache=True)
def _run_gdc(t, gyro, accel, q0, offset, beta):
    n = t.shape[0]
    qs = np.empty((n, 4))
    q = q0.copy()
    qs[0] = q
    for k in range(1, n):
        q = _gdc(q, gyro[k] - offset, accel[k], t[k] - t[k - 1], beta)
        qs[k] = q
    return qs


def _check_dt(dt):
    if not 0.0 < dt <= MAX_DT:
        raise ExcessiveDt(f"time step {dt} s outside (0, {MAX_DT}]")


def ncf_step(state, sample, dt):
    _check_dt(dt)
    s = _as_sample(sample)
    q, b = _ncf(
        state.q, state.bias, np.asarray(s.gyro, float), np.asarray(s.accel, float), dt, state.kp, state.ki
    )
    return NcfState(q=q, bias=b, kp=state.kp, ki=state.ki)


def gdc_step(state, sample, dt):
    _check_dt(dt)
    s = _as_sample(sample)
    q = _gdc(state.q, np.asarray(s.gyro, float), np.asarray(s.accel, float), dt, state.beta_gain)
    return GdcState(q=q, beta_gain=state.beta_gain)


class NCF(_AttitudeFilter):
    """Nonlinear complementary filter with gyro-bias integral feedback.

    Parameters
    ----------
    kp : float
        Proportional gain on the accelerometer error (1/s).
    ki : float
        Integral gain driving the bias estimate.
    bias_init : {'calibrated', 'zero'}
    """

    def __init__(self, kp=1.0, ki=0.3, bias_init="calibrated"):
        self.kp = kp
        self.ki = ki
        self.bias_init = bias_init

    def _filter(self, X):
        t = np.ascontiguousarray(X[:, 0])
        q, b = _run_ncf(
            t,
            np.ascontiguousarray(X[:, 1:4]),
            np.ascontiguousarray(X[:, 4:7]),
            np.array(self.calibration_.q0, float),
            self._initial_bias(),
            float(self.kp),
            float(self.ki),
        )
        return FilterResult(t=t, q=q, bias=b, static=np.zeros(len(t), dtype=bool))


class GDC(_AttitudeFilter):
    """Gradient-descent complementary filter.

    GDC has no bias state; with ``bias_init='calibrated'`` the calibration
    mean gyro is subtracted from every sample as a fixed offset.
    """

    def __init__(self, beta=0.1, bias_init="calibrated"):
        self.beta = beta
        self.bias_init = bias_init

    def _filter(self, X):
        t = np.ascontiguousarray(X[:, 0])
        offset = self._initial_bias()
        q = _run_gdc(
            t,
            np.ascontiguousarray(X[:, 1:4]),
            np.ascontiguousarray(X[:, 4:7]),
            np.array(self.calibration_.q0, float),
            offset,
            float(self.beta),
        )
        return FilterResult(t=t, q=q, bias=np.tile(offset, (len(t), 1)), static=np.zeros(len(t), dtype=bool))
