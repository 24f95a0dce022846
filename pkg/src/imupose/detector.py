"""Sliding-window static-phase detector.

The window keeps the last ``N`` samples of three channels (gyro vector,
accelerometer vector, accelerometer magnitude) and running sums from which the
mean and the unbiased sample covariance are available in O(1).  The sums are
kept relative to a centre point that is moved to the current mean every
``RECOMPUTE_EVERY`` pushes, when they are also rebuilt from the buffer.

A window is static when all four tests hold:

1. per-axis gyro variance      <= alpha  * calibrated gyro variance
2. per-axis accel variance     <= beta   * calibrated accel variance
3. |mean accel magnitude - 1|  <= gamma1
4. accel magnitude variance    <= gamma2
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from ._validation import check_stream
from .errors import WindowNotFull

RECOMPUTE_EVERY = 10_000
VARIANCE_FLOOR = 1e-10

CHANNELS = {"gyro": slice(0, 3), "accel": slice(3, 6), "accel_norm": slice(6, 7)}
_NCOL = 7


@njit(cache=True)
def _row(gyro, accel):
    r = np.empty(_NCOL)
    r[0:3] = gyro
    r[3:6] = accel
    r[6] = np.sqrt(accel[0] ** 2 + accel[1] ** 2 + accel[2] ** 2)
    return r


@njit(cache=True)
def _rebuild(buf, count, center, s1, s2):
    n = min(count, buf.shape[0])
    s1[:] = 0.0
    s2[:, :] = 0.0
    for k in range(n):
        d = buf[k] - center
        s1 += d
        s2 += np.outer(d, d)


@njit(cache=True)
def _push(buf, meta, center, s1, s2, row):
    """Insert ``row``; ``meta`` holds [count, write position, pushes since rebuild]."""
    cap = buf.shape[0]
    count, pos = meta[0], meta[1]
    if count == 0:
        center[:] = row
    if count >= cap:
        d = buf[pos] - center
        s1 -= d
        s2 -= np.outer(d, d)
    buf[pos] = row
    d = row - center
    s1 += d
    s2 += np.outer(d, d)
    meta[0] = count + 1
    meta[1] = (pos + 1) % cap
    meta[2] += 1
    if meta[2] >= RECOMPUTE_EVERY:
        n = min(meta[0], cap)
        center += s1 / n
        _rebuild(buf, meta[0], center, s1, s2)
        meta[2] = 0


@njit(cache=True)
def _stats(cap, center, s1, s2):
    mean = center + s1 / cap
    cov = (s2 - np.outer(s1, s1) / cap) / (cap - 1)
    return mean, cov


@njit(cache=True)
def _conditions(mean, cov, gyro_thresh, accel_thresh, gamma1, gamma2):
    c1 = True
    c2 = True
    for i in range(3):
        if cov[i, i] > gyro_thresh[i]:
            c1 = False
        if cov[3 + i, 3 + i] > accel_thresh[i]:
            c2 = False
    c3 = abs(mean[6] - 1.0) <= gamma1
    c4 = cov[6, 6] <= gamma2
    return c1, c2, c3, c4


@njit(cache=True)
def _batch_conditions(gyro, accel, cap, gyro_thresh, accel_thresh, gamma1, gamma2):
    n = gyro.shape[0]
    out = np.zeros((n, 5), dtype=np.bool_)
    buf = np.zeros((cap, _NCOL))
    meta = np.zeros(3, dtype=np.int64)
    center = np.zeros(_NCOL)
    s1 = np.zeros(_NCOL)
    s2 = np.zeros((_NCOL, _NCOL))
    for k in range(n):
        _push(buf, meta, center, s1, s2, _row(gyro[k], accel[k]))
        if meta[0] >= cap:
            mean, cov = _stats(cap, center, s1, s2)
            c1, c2, c3, c4 = _conditions(mean, cov, gyro_thresh, accel_thresh, gamma1, gamma2)
            out[k, 0] = c1
            out[k, 1] = c2
            out[k, 2] = c3
            out[k, 3] = c4
            out[k, 4] = True
    return out


@dataclass(frozen=True)
class StaticVerdict:
    is_static: bool
    cond1: bool
    cond2: bool
    cond3: bool
    cond4: bool
    window_full: bool


class DetectorWindow:
    """Ring buffer over the last ``capacity`` IMU samples of one sensor."""

    def __init__(self, capacity):
        if capacity < 2:
            raise ValueError("window capacity must be at least 2")
        self.capacity = int(capacity)
        self._buf = np.zeros((self.capacity, _NCOL))
        self._meta = np.zeros(3, dtype=np.int64)
        self._center = np.zeros(_NCOL)
        self._s1 = np.zeros(_NCOL)
        self._s2 = np.zeros((_NCOL, _NCOL))

    def push(self, gyro, accel):
        row = _row(np.asarray(gyro, dtype=float), np.asarray(accel, dtype=float))
        _push(self._buf, self._meta, self._center, self._s1, self._s2, row)

    @property
    def count(self):
        return int(self._meta[0])

    @property
    def full(self):
        return self.count >= self.capacity

    def samples(self):
        """Buffered rows ``[gyro, accel, |accel|]`` in arrival order."""
        n = min(self.count, self.capacity)
        if n < self.capacity:
            return self._buf[:n].copy()
        return np.roll(self._buf, -int(self._meta[1]), axis=0)

    def _stats(self):
        if not self.full:
            raise WindowNotFull(f"window holds {self.count} of {self.capacity} samples")
        return _stats(self.capacity, self._center, self._s1, self._s2)


def window_mean(window, channel):
    """Arithmetic mean of ``channel`` ('gyro', 'accel' or 'accel_norm') over a full window."""
    mean, _ = window._stats()
    m = mean[CHANNELS[channel]]
    return float(m[0]) if channel == "accel_norm" else m


def window_covariance(window, channel):
    """Unbiased (1/(N-1)) sample covariance of ``channel`` over a full window."""
    _, cov = window._stats()
    sl = CHANNELS[channel]
    c = cov[sl, sl]
    return float(c[0, 0]) if channel == "accel_norm" else c


def _thresholds(calib, params):
    gyro = params.alpha * np.maximum(np.diag(calib.sigma_omega_hat), VARIANCE_FLOOR)
    accel = params.beta * np.maximum(np.diag(calib.sigma_g_hat), VARIANCE_FLOOR)
    return gyro, accel


def check_static(window, calib, params):
    """Evaluate the four static-phase tests on the current window.

    The matrix inequalities compare diagonal entries (per-axis variances).
    An underfilled window is reported as non-static.
    """
    if not window.full:
        return StaticVerdict(False, False, False, False, False, False)
    mean, cov = window._stats()
    gyro_t, accel_t = _thresholds(calib, params)
    c = _conditions(mean, cov, gyro_t, accel_t, params.gamma1, params.gamma2)
    return StaticVerdict(all(c), *c, True)


def static_conditions(X, calib, params):
    """Per-sample detector output for a whole stream.

    Returns an ``(n, 5)`` boolean array with columns
    ``cond1, cond2, cond3, cond4, window_full``; row ``k`` is the verdict for
    the window ending at sample ``k``, identical to pushing the samples one at
    a time into a :class:`DetectorWindow`.
    """
    X = check_stream(X)
    gyro_t, accel_t = _thresholds(calib, params)
    return _batch_conditions(
        np.ascontiguousarray(X[:, 1:4]),
        np.ascontiguousarray(X[:, 4:7]),
        int(params.window_n),
        gyro_t,
        accel_t,
        float(params.gamma1),
        float(params.gamma2),
    )


def static_mask(X, calib, params):
    return static_conditions(X, calib, params).all(axis=1)
