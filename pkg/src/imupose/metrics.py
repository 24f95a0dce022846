"""Attitude and hand-position error metrics.

The estimate and the truth live in different world frames (the filter's
heading is arbitrary).  A constant alignment is averaged over an initial still
window and applied before the error quaternion

    q_err = q_truth⁻¹ ⊗ (q_align ⊗ q_est)

is reported as absolute Z-Y-X Euler angles in degrees.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import quat
from .errors import AlignmentNotStatic, NoOverlap

ALIGNMENT_SPREAD_DEG = 2.0
ANGLES = ("roll", "pitch", "yaw")


def match_nearest(t_ref, t_other, tol):
    """Indices into ``t_other`` nearest to each ``t_ref`` and a mask of matches within ``tol``."""
    t_ref = np.asarray(t_ref, dtype=float)
    t_other = np.asarray(t_other, dtype=float)
    j = np.clip(np.searchsorted(t_other, t_ref), 1, len(t_other) - 1) if len(t_other) > 1 else np.zeros(len(t_ref), int)
    if len(t_other) > 1:
        left_closer = np.abs(t_ref - t_other[j - 1]) <= np.abs(t_other[j] - t_ref)
        j = np.where(left_closer, j - 1, j)
    return j, np.abs(t_other[j] - t_ref) <= tol


def _half_period(t):
    return 0.5 * float(np.median(np.diff(t))) if len(t) > 1 else 0.0


def common_samples(t_truth, t_est):
    """Pairs ``(i_truth, i_est)`` of nearest-neighbour matches within half a sample period."""
    t_truth, t_est = np.asarray(t_truth, float), np.asarray(t_est, float)
    if len(t_truth) == 0 or len(t_est) == 0 or t_truth[-1] < t_est[0] or t_est[-1] < t_truth[0]:
        raise NoOverlap("estimate and truth time ranges do not overlap")
    tol = max(_half_period(t_truth), _half_period(t_est)) + 1e-12
    j, ok = match_nearest(t_truth, t_est, tol)
    if not ok.any():
        raise NoOverlap("no estimate sample lies within half a period of a truth sample")
    return np.flatnonzero(ok), j[ok]


def alignment(q_truth, q_est, t, window):
    """Constant rotation taking estimates onto truth, averaged over ``t < t[0] + window``."""
    sel = t <= t[0] + window
    rel = quat.quat_mul_many(q_truth[sel], quat.conj_many(q_est[sel]))
    q_align = quat.average(rel)
    spread = np.array([quat.angle_between(q_align, r) for r in rel])
    if spread.max() > np.deg2rad(ALIGNMENT_SPREAD_DEG):
        raise AlignmentNotStatic(
            f"estimate/truth offset varies by {np.rad2deg(spread.max()):.2f} deg over the alignment window"
        )
    return q_align


@dataclass
class ErrorReport:
    """Summary statistics and per-sample error series.

    ``errors_deg`` holds absolute roll/pitch/yaw errors per evaluated sample.
    ``drift_deg`` and the hand-error fields are set when the experiment
    defines them.
    """

    algorithm: str
    t: np.ndarray
    errors_deg: np.ndarray
    drift_deg: float = float("nan")
    hand_t: np.ndarray = None
    hand_error_mm: np.ndarray = None
    extra: dict = field(default_factory=dict)

    @property
    def mean_deg(self):
        return self.errors_deg.mean(axis=0)

    @property
    def std_deg(self):
        return self.errors_deg.std(axis=0)

    @property
    def hand_mean_mm(self):
        return float(np.mean(self.hand_error_mm)) if self.hand_error_mm is not None else float("nan")

    @property
    def hand_std_mm(self):
        return float(np.std(self.hand_error_mm)) if self.hand_error_mm is not None else float("nan")

    def summary(self):
        row = {"algorithm": self.algorithm, "samples": len(self.t)}
        for i, a in enumerate(ANGLES):
            row[f"{a}_mean_deg"] = float(self.mean_deg[i])
            row[f"{a}_std_deg"] = float(self.std_deg[i])
        row["drift_deg"] = float(self.drift_deg)
        row["hand_mean_mm"] = self.hand_mean_mm
        row["hand_std_mm"] = self.hand_std_mm
        row.update(self.extra)
        return row

    def summary_csv(self):
        row = self.summary()
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(row))
        w.writerow([_fmt(v) for v in row.values()])
        return buf.getvalue()

    def series_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "roll_err_deg", "pitch_err_deg", "yaw_err_deg"])
        for t, e in zip(self.t, self.errors_deg):
            w.writerow([_fmt(t), *(_fmt(x) for x in e)])
        return buf.getvalue()

    def hand_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "hand_err_mm"])
        for t, e in zip(self.hand_t, self.hand_error_mm):
            w.writerow([_fmt(t), _fmt(e)])
        return buf.getvalue()

    def write(self, prefix):
        """Write ``<prefix>_summary.csv``, ``<prefix>_series.csv`` and, if present, ``<prefix>_hand.csv``."""
        paths = [f"{prefix}_summary.csv", f"{prefix}_series.csv"]
        texts = [self.summary_csv(), self.series_csv()]
        if self.hand_error_mm is not None:
            paths.append(f"{prefix}_hand.csv")
            texts.append(self.hand_csv())
        for p, text in zip(paths, texts):
            with open(p, "w", newline="") as fh:
                fh.write(text)
        return paths


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def attitude_errors(q_truth, q_est, q_align=None):
    """Absolute Z-Y-X Euler angles (deg) of ``q_truth⁻¹ ⊗ q_align ⊗ q_est``, shape (n, 3)."""
    q_est = np.atleast_2d(q_est)
    if q_align is not None:
        q_est = quat.quat_mul_many(np.asarray(q_align)[None, :], q_est)
    q_err = quat.quat_mul_many(quat.conj_many(np.atleast_2d(q_truth)), q_est)
    return np.abs(np.rad2deg(quat.euler_zyx_many(q_err)))


def evaluate_attitude(t_est, q_est, t_truth, q_truth, align_window=1.0, algorithm=""):
    """Compare an attitude series against truth.

    Both series are matched on the truth timestamps by nearest neighbour
    within half a sample period; unmatched samples are dropped.
    """
    i_truth, i_est = common_samples(t_truth, t_est)
    t = np.asarray(t_truth, dtype=float)[i_truth]
    qt = np.asarray(q_truth, dtype=float)[i_truth]
    qe = np.asarray(q_est, dtype=float)[i_est]
    q_align = alignment(qt, qe, t, align_window)
    return ErrorReport(algorithm=algorithm, t=t, errors_deg=attitude_errors(qt, qe, q_align))


def heading_drift(report, t_from):
    """Mean absolute yaw error (deg) over samples at or after ``t_from``."""
    sel = report.t >= t_from
    return float(report.errors_deg[sel, 2].mean()) if sel.any() else float("nan")


def position_errors_mm(p_est, p_truth):
    """Per-sample Euclidean distance in millimetres."""
    return 1000.0 * np.linalg.norm(np.asarray(p_est) - np.asarray(p_truth), axis=1)
