"""Upper-body kinematic chain and closed-chain link-length calibration.

The chain is rooted at the chest.  Each shoulder sits at a fixed offset from
the chest origin along the chest's lateral axis; upper arm and forearm hang
off it through spherical joints.  The wrist is rigid, so the forearm link runs
from the elbow to the palm.

Frames: x forward, y left, z up.  With every attitude equal to the identity
the body is in a T-pose, arms stretched along ±y.  Left-side bones point along
+y in their own frame and right-side bones along -y.

Sensor frames coincide with segment frames; a sensor's estimated attitude is
brought into the common frame from a known start posture (see
:class:`UpperBodyTracker`).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import quat
from .errors import CalibrationUnderexcited, MissingAttitude, OptimizerStalled

SEGMENTS = ("chest", "upper_arm_left", "forearm_left", "upper_arm_right", "forearm_right")
ARM_LINKS = ("upper_arm_left", "forearm_left", "upper_arm_right", "forearm_right")
LINKS = ("shoulder",) + ARM_LINKS
SIDES = ("left", "right")

LATERAL = {"left": np.array([0.0, 1.0, 0.0]), "right": np.array([0.0, -1.0, 0.0])}
BONE_AXIS = {seg: LATERAL[seg.rsplit("_", 1)[1]] for seg in ARM_LINKS}
PARENT_JOINT = {
    "shoulder": "chest",
    "upper_arm_left": "shoulder_left",
    "forearm_left": "elbow_left",
    "upper_arm_right": "shoulder_right",
    "forearm_right": "elbow_right",
}

# Adult averages (m); the forearm includes the hand up to the palm centre.
NOMINAL_LENGTHS = {
    "shoulder": 0.18,
    "upper_arm_left": 0.30,
    "forearm_left": 0.33,
    "upper_arm_right": 0.30,
    "forearm_right": 0.33,
}


@dataclass(frozen=True)
class BodyModel:
    lengths: dict = field(default_factory=lambda: dict(NOMINAL_LENGTHS))
    sensor_map: dict = field(default_factory=lambda: {s: s for s in SEGMENTS})

    def __post_init__(self):
        missing = set(LINKS) - set(self.lengths)
        if missing:
            raise ValueError(f"missing link lengths: {sorted(missing)}")
        if any(self.lengths[k] <= 0 for k in LINKS):
            raise ValueError("link lengths must be positive")
        if set(self.sensor_map) != set(SEGMENTS):
            raise ValueError(f"sensor_map must cover exactly {SEGMENTS}")

    @property
    def links(self):
        """``(name, length, parent joint)`` in chain order."""
        return [(k, self.lengths[k], PARENT_JOINT[k]) for k in LINKS]

    def with_lengths(self, **lengths):
        merged = dict(self.lengths)
        merged.update(lengths)
        return BodyModel(lengths=merged, sensor_map=dict(self.sensor_map))

    def as_vector(self, names=LINKS):
        return np.array([self.lengths[k] for k in names])


@dataclass(frozen=True)
class SegmentPose:
    q: np.ndarray
    origin: np.ndarray


@dataclass(frozen=True)
class HomTransform:
    rotation: np.ndarray
    translation: np.ndarray

    @property
    def matrix(self):
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def __matmul__(self, other):
        return HomTransform(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def apply(self, p):
        return self.rotation @ np.asarray(p, dtype=float) + self.translation


@dataclass(frozen=True)
class AnthropometricPriors:
    lengths: dict = field(default_factory=lambda: dict(NOMINAL_LENGTHS))
    tolerance: float = 0.2

    def __post_init__(self):
        if any(v <= 0 for v in self.lengths.values()):
            raise ValueError("prior lengths must be positive")

    def bounds(self, name):
        L = self.lengths[name]
        return L * (1.0 - self.tolerance), L * (1.0 + self.tolerance)


def link_transform(q, length, axis):
    """Homogeneous transform of a link with attitude ``q`` whose bone lies along ``axis``."""
    R = quat.to_rotation_matrix(np.asarray(q, dtype=float))
    return HomTransform(R, R @ (length * np.asarray(axis, dtype=float)))


def _require(attitudes, segments=SEGMENTS):
    for seg in segments:
        if seg not in attitudes:
            raise MissingAttitude(seg)


def forward_kinematics(model, attitudes):
    """Poses of every segment plus both hands for one frame.

    ``attitudes`` maps segment name to its quaternion in the common frame.
    The result maps segment name to a :class:`SegmentPose` whose origin is the
    segment's proximal joint; ``hand_left`` / ``hand_right`` carry the palm
    positions with the forearm attitude.
    """
    _require(attitudes)
    q_chest = np.asarray(attitudes["chest"], dtype=float)
    poses = {"chest": SegmentPose(q_chest, np.zeros(3))}
    chest = HomTransform(quat.to_rotation_matrix(q_chest), np.zeros(3))
    for side in SIDES:
        shoulder = chest @ HomTransform(np.eye(3), model.lengths["shoulder"] * LATERAL[side])
        p = shoulder.translation
        for seg in (f"upper_arm_{side}", f"forearm_{side}"):
            q = np.asarray(attitudes[seg], dtype=float)
            poses[seg] = SegmentPose(q, p)
            p = p + link_transform(q, model.lengths[seg], BONE_AXIS[seg]).translation
        poses[f"hand_{side}"] = SegmentPose(poses[f"forearm_{side}"].q, p)
    return poses


def _bone_directions(attitudes):
    """Unit bone vectors in the common frame for every frame, shape (n, 3) each."""
    R_chest = quat.rotation_matrices(attitudes["chest"])
    dirs = {f"shoulder_{side}": R_chest @ LATERAL[side] for side in SIDES}
    for seg in ARM_LINKS:
        dirs[seg] = quat.rotation_matrices(attitudes[seg]) @ BONE_AXIS[seg]
    return dirs


def joint_positions(model, attitudes):
    """Vectorised joint positions over frames.

    ``attitudes`` maps segment to an ``(n, 4)`` array; returns a dict of
    ``(n, 3)`` arrays for shoulders, elbows and hands.
    """
    _require(attitudes)
    att = {k: np.atleast_2d(np.asarray(v, dtype=float)) for k, v in attitudes.items()}
    dirs = _bone_directions(att)
    L = model.lengths
    out = {}
    for side in SIDES:
        s = L["shoulder"] * dirs[f"shoulder_{side}"]
        e = s + L[f"upper_arm_{side}"] * dirs[f"upper_arm_{side}"]
        out[f"shoulder_{side}"] = s
        out[f"elbow_{side}"] = e
        out[f"hand_{side}"] = e + L[f"forearm_{side}"] * dirs[f"forearm_{side}"]
    return out


def hand_gap(model, attitudes):
    """Per-frame left-minus-right palm position, shape (n, 3)."""
    p = joint_positions(model, attitudes)
    return p["hand_left"] - p["hand_right"]


# -- start postures ------------------------------------------------------------

def _pointing(segment, direction):
    d = np.asarray(direction, dtype=float)
    return quat.shortest_arc(BONE_AXIS[segment], d / np.linalg.norm(d))


def start_posture(name):
    """Segment attitudes of a named, length-independent start posture.

    ``'tpose'``: arms stretched sideways.  ``'table'``: seated, upper arms
    hanging slightly forward, forearms resting forward on a table.
    """
    if name == "tpose":
        return {seg: quat.identity() for seg in SEGMENTS}
    if name == "table":
        posture = {"chest": quat.identity()}
        for side, sy in (("left", 1.0), ("right", -1.0)):
            posture[f"upper_arm_{side}"] = _pointing(f"upper_arm_{side}", (0.2, 0.05 * sy, -0.98))
            posture[f"forearm_{side}"] = _pointing(f"forearm_{side}", (0.97, -0.1 * sy, -0.15))
        return posture
    raise ValueError(f"unknown start posture {name!r}")


# -- attitude matrices ------------------------------------------------------------

def stack_attitudes(attitudes):
    """Dict of ``(n, 4)`` arrays -> ``(n, 20)`` array in :data:`SEGMENTS` order."""
    _require(attitudes)
    return np.hstack([np.atleast_2d(np.asarray(attitudes[s], dtype=float)) for s in SEGMENTS])


def unstack_attitudes(X):
    if isinstance(X, dict):
        _require(X)
        return {s: np.atleast_2d(np.asarray(X[s], dtype=float)) for s in SEGMENTS}
    X = check_array(X, dtype=np.float64)
    if X.shape[1] != 4 * len(SEGMENTS):
        raise ValueError(f"expected {4 * len(SEGMENTS)} columns, got {X.shape[1]}")
    return {s: X[:, 4 * i : 4 * i + 4] for i, s in enumerate(SEGMENTS)}


# -- closed-chain calibration ---------------------------------------------------------

MIN_FRAMES = 100
MIN_ROTATION_RANGE = np.deg2rad(30.0)


def rotation_range(q):
    """Per-axis span (rad) of the rotation vectors of ``q`` about their mean attitude."""
    q = np.atleast_2d(q)
    mean = quat.average(q)
    rv = quat.log_rotation_many(quat.quat_mul_many(np.tile(quat.conj(mean), (len(q), 1)), q))
    return rv.max(axis=0) - rv.min(axis=0)


def excitation_ok(attitudes, segments=ARM_LINKS):
    n = len(next(iter(attitudes.values())))
    if n < MIN_FRAMES:
        return False
    return all(rotation_range(attitudes[s]).max() >= MIN_ROTATION_RANGE for s in segments)


class _GapObjective:
    """Mean squared hand-to-hand distance as a function of link lengths.

    The palm gap is linear in the lengths, so bone directions are computed once.
    """

    def __init__(self, attitudes):
        dirs = _bone_directions(attitudes)
        self._cols = {
            "shoulder": dirs["shoulder_left"] - dirs["shoulder_right"],
            "upper_arm_left": dirs["upper_arm_left"],
            "forearm_left": dirs["forearm_left"],
            "upper_arm_right": -dirs["upper_arm_right"],
            "forearm_right": -dirs["forearm_right"],
        }
        self.evaluations = 0

    def __call__(self, lengths):
        self.evaluations += 1
        gap = sum(lengths[k] * self._cols[k] for k in LINKS)
        return float(np.mean(np.sum(gap * gap, axis=1)))


def _coordinate_descent(objective, lengths, names, bounds, max_passes, tol, min_step):
    x = dict(lengths)
    f = objective(x)
    history = [f]
    converged = False
    for _ in range(max_passes):
        f_pass = f
        for k in names:
            lo, hi = bounds[k]
            step = 0.25 * (hi - lo)
            while step > min_step:
                moved = False
                for sign in (1.0, -1.0):
                    cand = min(hi, max(lo, x[k] + sign * step))
                    if cand == x[k]:
                        continue
                    trial = dict(x)
                    trial[k] = cand
                    f_trial = objective(trial)
                    if f_trial < f:
                        x, f, moved = trial, f_trial, True
                        break
                if not moved:
                    step *= 0.5
        history.append(f)
        if f_pass - f <= tol:
            converged = True
            break
    return x, history, converged


def fit_link_lengths(model, priors, recording, names=ARM_LINKS, max_passes=200, tol=1e-10, min_step=1e-7):
    """Closed-chain fit returning ``(BodyModel, per-pass objective history)``.

    See :func:`calibrate_link_lengths`.
    """
    att = unstack_attitudes(recording)
    if not excitation_ok(att):
        warnings.warn(
            "hands-together recording is too short or rotates the arms less than 30 degrees",
            CalibrationUnderexcited,
            stacklevel=3,
        )
    start = {k: priors.lengths.get(k, model.lengths[k]) if k in names else model.lengths[k] for k in LINKS}
    bounds = {k: priors.bounds(k) for k in names}
    for k in names:
        start[k] = min(bounds[k][1], max(bounds[k][0], start[k]))
    lengths, history, converged = _coordinate_descent(
        _GapObjective(att), start, names, bounds, max_passes, tol, min_step
    )
    if not converged:
        warnings.warn(f"no convergence after {max_passes} passes", OptimizerStalled, stacklevel=3)
    return model.with_lengths(**lengths), history


def calibrate_link_lengths(model, priors, recording, names=ARM_LINKS, max_passes=200, tol=1e-10):
    """Refine link lengths from a recording with both palms held together.

    Minimises the mean squared palm-to-palm distance over the frames of
    ``recording`` (segment -> ``(n, 4)`` attitudes, or an ``(n, 20)`` array)
    by derivative-free coordinate descent inside the prior box, starting from
    the prior lengths.

    The palm gap is homogeneous in the lengths, so a uniformly scaled body
    fits equally well.  At least one length must therefore stay fixed; by
    default the shoulder half-width (directly measurable) anchors the scale
    and the four arm lengths are fitted.
    """
    return fit_link_lengths(model, priors, recording, names, max_passes, tol)[0]


class LinkLengthCalibrator(BaseEstimator):
    """Estimator wrapper around :func:`calibrate_link_lengths`.

    ``fit`` takes the hands-together recording and stores ``model_`` and the
    per-pass objective ``history_`` (m^2).
    """

    def __init__(self, model=None, priors=None, names=ARM_LINKS, max_passes=200, tol=1e-10):
        self.model = model
        self.priors = priors
        self.names = names
        self.max_passes = max_passes
        self.tol = tol

    def fit(self, X, y=None):
        model = self.model if self.model is not None else BodyModel()
        priors = self.priors if self.priors is not None else AnthropometricPriors()
        self.model_, self.history_ = fit_link_lengths(
            model, priors, X, tuple(self.names), self.max_passes, self.tol
        )
        return self

    def score(self, X, y=None):
        """Negative mean squared palm gap (m^2) under the fitted model."""
        check_is_fitted(self, "model_")
        gap = hand_gap(self.model_, unstack_attitudes(X))
        return -float(np.mean(np.sum(gap * gap, axis=1)))


class UpperBodyTracker(TransformerMixin, BaseEstimator):
    """Map per-sensor attitude estimates to palm positions.

    Each filter reports its sensor attitude in its own heading frame.  ``fit``
    receives estimates recorded while the subject holds ``start_posture`` and
    finds, per sensor, the constant rotation that takes the estimate onto the
    known posture; ``transform`` applies it and runs the forward kinematics.

    ``transform`` returns an ``(n, 6)`` array: left palm xyz, right palm xyz (m).
    """

    def __init__(self, model=None, start_posture="tpose"):
        self.model = model
        self.start_posture = start_posture

    def fit(self, X, y=None):
        att = unstack_attitudes(X)
        posture = start_posture(self.start_posture) if isinstance(self.start_posture, str) else self.start_posture
        self.alignment_ = {
            s: quat.quat_mul(posture[s], quat.conj(quat.average(att[s]))) for s in SEGMENTS
        }
        return self

    def aligned_attitudes(self, X):
        check_is_fitted(self, "alignment_")
        att = unstack_attitudes(X)
        return {s: quat.quat_mul_many(self.alignment_[s][None, :], att[s]) for s in SEGMENTS}

    def transform(self, X):
        model = self.model if self.model is not None else BodyModel()
        p = joint_positions(model, self.aligned_attitudes(X))
        return np.hstack([p["hand_left"], p["hand_right"]])
