"""Quaternion and rotation algebra.

Quaternions are ``float64`` arrays of shape ``(4,)`` in scalar-first order
``[w, x, y, z]`` with the Hamilton product.  A quaternion ``q`` describes the
rotation from the body frame to the inertial frame, so ``to_rotation_matrix(q)
@ v_body`` gives ``v`` in inertial coordinates.

The scalar routines are compiled with numba so that the filter kernels can call
them in tight loops; they are equally usable from plain Python.  The ``*_many``
helpers are vectorised numpy versions for whole trajectories.
"""

import logging
import math

import numpy as np
from numba import njit

logger = logging.getLogger(__name__)

SMALL_ANGLE = 1e-8
GIMBAL_TOL = 1e-6
_UNIT_TOL = 1e-6


@njit(cache=True)
def identity():
    q = np.zeros(4)
    q[0] = 1.0
    return q


@njit(cache=True)
def normalize(q):
    n = math.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    return q / n


@njit(cache=True)
def _raw_mul(p, q):
    w1, x1, y1, z1 = p[0], p[1], p[2], p[3]
    w2, x2, y2, z2 = q[0], q[1], q[2], q[3]
    out = np.empty(4)
    out[0] = w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2
    out[1] = w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2
    out[2] = w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2
    out[3] = w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2
    return out


@njit(cache=True)
def quat_mul(p, q):
    """Hamilton product ``p ⊗ q``.

    When both factors are unit quaternions the result is renormalised, which
    keeps long products on the unit sphere.
    """
    out = _raw_mul(p, q)
    np_ = p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + p[3] * p[3]
    nq = q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]
    if abs(np_ - 1.0) < _UNIT_TOL and abs(nq - 1.0) < _UNIT_TOL:
        out = normalize(out)
    return out


@njit(cache=True)
def conj(q):
    out = -q.copy()
    out[0] = q[0]
    return out


@njit(cache=True)
def pure_quat(v):
    """Embed a 3-vector as ``[0, v]``; the result is not normalised."""
    out = np.zeros(4)
    out[1] = v[0]
    out[2] = v[1]
    out[3] = v[2]
    return out


@njit(cache=True)
def exp_rotation(v):
    """Unit quaternion of the rotation vector ``v`` (rad)."""
    theta = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    out = np.empty(4)
    if theta < SMALL_ANGLE:
        out[0] = 1.0
        out[1] = 0.5 * v[0]
        out[2] = 0.5 * v[1]
        out[3] = 0.5 * v[2]
        return normalize(out)
    s = math.sin(0.5 * theta) / theta
    out[0] = math.cos(0.5 * theta)
    out[1] = s * v[0]
    out[2] = s * v[1]
    out[3] = s * v[2]
    return out


@njit(cache=True)
def log_rotation(q):
    """Rotation vector of ``q``, taking the shorter of ``q`` and ``-q``."""
    w, x, y, z = q[0], q[1], q[2], q[3]
    if w < 0.0:
        w, x, y, z = -w, -x, -y, -z
    s = math.sqrt(x * x + y * y + z * z)
    out = np.empty(3)
    if s < 1e-12:
        k = 2.0 / w
    else:
        k = 2.0 * math.atan2(s, w) / s
    out[0] = k * x
    out[1] = k * y
    out[2] = k * z
    return out


def small_angle_correction(a):
    """Error quaternion ``δq(a)`` applied on the right of the reference attitude.

    Same map as :func:`exp_rotation`; large arguments are allowed but logged
    since they fall outside the regime where the error-angle model holds.
    """
    a = np.asarray(a, dtype=float)
    if np.linalg.norm(a) > 0.5:
        logger.info("error-angle correction of %.3f rad exceeds the small-angle regime", np.linalg.norm(a))
    return exp_rotation(a)


@njit(cache=True)
def to_rotation_matrix(q):
    q = normalize(q)
    w, x, y, z = q[0], q[1], q[2], q[3]
    R = np.empty((3, 3))
    R[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[0, 1] = 2.0 * (x * y - w * z)
    R[0, 2] = 2.0 * (x * z + w * y)
    R[1, 0] = 2.0 * (x * y + w * z)
    R[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[1, 2] = 2.0 * (y * z - w * x)
    R[2, 0] = 2.0 * (x * z - w * y)
    R[2, 1] = 2.0 * (y * z + w * x)
    R[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


@njit(cache=True)
def gravity_in_body(q):
    """``A(q)ᵀ [0, 0, 1]``: the unit up-vector expressed in body coordinates."""
    w, x, y, z = q[0], q[1], q[2], q[3]
    out = np.empty(3)
    out[0] = 2.0 * (x * z - w * y)
    out[1] = 2.0 * (y * z + w * x)
    out[2] = 1.0 - 2.0 * (x * x + y * y)
    return out


@njit(cache=True)
def skew(v):
    S = np.zeros((3, 3))
    S[0, 1] = -v[2]
    S[0, 2] = v[1]
    S[1, 0] = v[2]
    S[1, 2] = -v[0]
    S[2, 0] = -v[1]
    S[2, 1] = v[0]
    return S


@njit(cache=True)
def rotate(q, v):
    return to_rotation_matrix(q) @ v


@njit(cache=True)
def _euler_zyx(q):
    q = normalize(q)
    w, x, y, z = q[0], q[1], q[2], q[3]
    sinp = 2.0 * (w * y - z * x)
    sinp = min(1.0, max(-1.0, sinp))
    pitch = math.asin(sinp)
    out = np.empty(3)
    out[1] = pitch
    if 0.5 * math.pi - abs(pitch) < GIMBAL_TOL:
        r01 = 2.0 * (x * y - w * z)
        r11 = 1.0 - 2.0 * (x * x + z * z)
        if pitch > 0:
            out[0] = math.atan2(r01, r11)
        else:
            out[0] = math.atan2(-r01, r11)
        out[2] = 0.0
        return out, True
    out[0] = math.atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    out[2] = math.atan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    return out, False


def to_euler_zyx(q, return_gimbal=False):
    """Intrinsic Z-Y-X angles as ``[roll, pitch, yaw]`` in radians.

    Near gimbal lock (pitch within 1e-6 rad of ±π/2) yaw is set to zero and
    the whole residual rotation is reported as roll; pass
    ``return_gimbal=True`` to also receive that flag.
    """
    angles, locked = _euler_zyx(np.asarray(q, dtype=float))
    if return_gimbal:
        return angles, locked
    return angles


@njit(cache=True)
def from_euler_zyx(roll, pitch, yaw):
    cr, sr = math.cos(0.5 * roll), math.sin(0.5 * roll)
    cp, sp = math.cos(0.5 * pitch), math.sin(0.5 * pitch)
    cy, sy = math.cos(0.5 * yaw), math.sin(0.5 * yaw)
    out = np.empty(4)
    out[0] = cy * cp * cr + sy * sp * sr
    out[1] = cy * cp * sr - sy * sp * cr
    out[2] = cy * sp * cr + sy * cp * sr
    out[3] = sy * cp * cr - cy * sp * sr
    return out


@njit(cache=True)
def angle_between(p, q):
    """Rotation angle (rad) of ``p⁻¹ ⊗ q``."""
    r = _raw_mul(conj(p), q)
    # atan2 keeps full precision near zero, where acos does not
    return 2.0 * math.atan2(math.sqrt(r[1] ** 2 + r[2] ** 2 + r[3] ** 2), abs(r[0]))


@njit(cache=True)
def shortest_arc(u, v):
    """Unit quaternion rotating unit vector ``u`` onto unit vector ``v``."""
    d = u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
    c = np.cross(u, v)
    out = np.empty(4)
    if d < -1.0 + 1e-12:
        axis = np.cross(u, np.array([1.0, 0.0, 0.0]))
        if np.sum(axis * axis) < 1e-12:
            axis = np.cross(u, np.array([0.0, 1.0, 0.0]))
        axis = axis / math.sqrt(np.sum(axis * axis))
        out[0] = 0.0
        out[1:] = axis
        return out
    out[0] = 1.0 + d
    out[1:] = c
    return normalize(out)


# -- vectorised helpers over arrays of shape (..., 4) ------------------------

def quat_mul_many(p, q):
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    w1, x1, y1, z1 = np.moveaxis(p, -1, 0)
    w2, x2, y2, z2 = np.moveaxis(q, -1, 0)
    out = np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def conj_many(q):
    q = np.array(q, dtype=float)
    q[..., 1:] *= -1.0
    return q


def rotation_matrices(q):
    q = np.asarray(q, dtype=float)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = np.moveaxis(q, -1, 0)
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[..., 0, 1] = 2.0 * (x * y - w * z)
    R[..., 0, 2] = 2.0 * (x * z + w * y)
    R[..., 1, 0] = 2.0 * (x * y + w * z)
    R[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[..., 1, 2] = 2.0 * (y * z - w * x)
    R[..., 2, 0] = 2.0 * (x * z - w * y)
    R[..., 2, 1] = 2.0 * (y * z + w * x)
    R[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


def exp_rotation_many(v):
    v = np.asarray(v, dtype=float)
    theta = np.linalg.norm(v, axis=-1, keepdims=True)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    k = np.where(small, 0.5, np.sin(0.5 * safe) / safe)
    w = np.where(small, 1.0, np.cos(0.5 * safe))
    out = np.concatenate([w, k * v], axis=-1)
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def log_rotation_many(q):
    q = np.array(q, dtype=float)
    q[q[..., 0] < 0] *= -1.0
    s = np.linalg.norm(q[..., 1:], axis=-1, keepdims=True)
    w = q[..., :1]
    small = s < 1e-12
    k = np.where(small, 2.0 / np.where(w == 0, 1.0, w), 2.0 * np.arctan2(s, w) / np.where(small, 1.0, s))
    return k * q[..., 1:]


def euler_zyx_many(q):
    """Row-wise :func:`to_euler_zyx` for an ``(n, 4)`` array."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q.T
    pitch = np.arcsin(np.clip(2.0 * (w * y - z * x), -1.0, 1.0))
    roll = np.arctan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
    yaw = np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))
    locked = 0.5 * np.pi - np.abs(pitch) < GIMBAL_TOL
    if np.any(locked):
        r01 = 2.0 * (x * y - w * z)
        r11 = 1.0 - 2.0 * (x * x + z * z)
        roll = np.where(locked, np.arctan2(np.sign(pitch) * r01, r11), roll)
        yaw = np.where(locked, 0.0, yaw)
    return np.stack([roll, pitch, yaw], axis=-1)


def average(quats, weights=None):
    """Rotation average of a set of quaternions (dominant eigenvector of Σ w qqᵀ)."""
    quats = np.atleast_2d(np.asarray(quats, dtype=float))
    if weights is None:
        weights = np.ones(len(quats))
    M = np.einsum("n,ni,nj->ij", weights, quats, quats)
    vals, vecs = np.linalg.eigh(M)
    q = vecs[:, np.argmax(vals)]
    return q if q[0] >= 0 else -q
