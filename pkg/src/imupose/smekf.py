"""Static-phase-gated multiplicative extended Kalman filter (sMEKF).

The filter tracks a reference attitude ``q_hat`` and a six-component error
state ``x = [a, b]``: the small rotation ``a`` from ``q_hat`` to the true
attitude (body frame, rad) and the gyroscope bias ``b`` (rad/s).

Every sample runs a prediction::

    w   = gyro - b
    q   <- q ⊗ exp(w dt)
    F   = I6 + dt [[-[w]x, -I3], [0, 0]]
    G   = dt [[-I3, 0], [0, I3]]
    P   <- F P Fᵀ + G Q Gᵀ,      Q = blkdiag(Σω, Σb)

and, when the static detector accepts the window ending at that sample, a
correction with the accelerometer (gravity direction) and the gyroscope (which
reads only the bias while the sensor is still)::

    H   = [[[A(q)ᵀ g]x, 0], [0, I3]]
    K   = P Hᵀ (H P Hᵀ + R)⁻¹,   R = blkdiag(Σg, Σω)
    x   <- [0; b] + K (y - [A(q)ᵀ g; b])
    P   <- P (I - Hᵀ Kᵀ)
    q   <- q ⊗ exp(a),  a <- 0
"""

from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import quat
from ._validation import MAX_DT, check_stream, check_timing
from .detector import VARIANCE_FLOOR, DetectorWindow, check_static, static_conditions
from .errors import ExcessiveDt, NonMonotoneTime, SingularInnovation
from .imu import ImuSample, NoiseParams, calibrate_stationary, default_window

MAX_CONDITION = 1e12
GRAVITY = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class FilterState:
    q_hat: np.ndarray
    b_hat: np.ndarray
    P: np.ndarray
    t: float
    a_hat: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass(frozen=True)
class FilterConfig:
    noise: NoiseParams
    R: np.ndarray
    Q: np.ndarray
    P0: np.ndarray

    @classmethod
    def from_calibration(cls, calib, noise=None, p0_angle=0.1, p0_bias=0.01, p0_heading=0.0):
        """Assemble R, Q and P0 from calibrated sensor covariances.

        A tiny variance floor keeps R invertible for noiseless data.  The
        initial angle covariance is ``p0_angle`` across gravity and
        ``p0_heading`` about it: heading is defined by the initial state, and
        a large unobservable variance there would leak into heading through
        the accelerometer update whenever the tilt estimate moves.
        """
        noise = noise if noise is not None else NoiseParams()
        floor = VARIANCE_FLOOR * np.eye(3)
        s_w = calib.sigma_omega_hat + floor
        s_g = calib.sigma_g_hat + floor
        Z = np.zeros((3, 3))
        R = np.block([[s_g, Z], [Z, s_w]])
        Q = np.block([[s_w, Z], [Z, noise.sigma_b]])
        u = calib.mean_accel
        P0 = np.zeros((6, 6))
        P0[:3, :3] = p0_angle**2 * (np.eye(3) - np.outer(u, u)) + max(p0_heading**2, VARIANCE_FLOOR) * np.outer(u, u)
        P0[3:, 3:] = p0_bias**2 * np.eye(3)
        return cls(noise=noise, R=R, Q=Q, P0=P0)


# -- kernels -------------------------------------------------------------------

@njit(cache=True)
def transition_matrices(w, dt):
    """Jacobians ``F`` (w.r.t. the state) and ``G`` (w.r.t. the noises) of the error dynamics."""
    F = np.eye(6)
    F[:3, :3] -= dt * quat.skew(w)
    for i in range(3):
        F[i, 3 + i] = -dt
    G = np.zeros((6, 6))
    for i in range(3):
        G[i, i] = -dt
        G[3 + i, 3 + i] = dt
    return F, G


@njit(cache=True)
def measurement_matrix(q):
    H = np.zeros((6, 6))
    H[:3, :3] = quat.skew(quat.gravity_in_body(q))
    for i in range(3):
        H[3 + i, 3 + i] = 1.0
    return H


@njit(cache=True)
def _predict(q, b, P, gyro, dt, Q):
    w = gyro - b
    q_new = quat.quat_mul(q, quat.exp_rotation(w * dt))
    F, G = transition_matrices(w, dt)
    P_new = F @ P @ F.T + G @ Q @ G.T
    return q_new, 0.5 * (P_new + P_new.T)


@njit(cache=True)
def _correct(q, b, P, gyro, accel, R):
    """Returns ``(q, b, P, a, ok)``; ``ok`` is False when the innovation covariance is ill-conditioned."""
    g_body = quat.gravity_in_body(q)
    H = measurement_matrix(q)
    innov = np.empty(6)
    innov[:3] = accel - g_body
    innov[3:] = gyro - b
    S = H @ P @ H.T + R
    S = 0.5 * (S + S.T)
    ev = np.linalg.eigvalsh(S)
    if ev[0] <= 0.0 or ev[-1] > MAX_CONDITION * ev[0]:
        return q, b, P, np.zeros(3), False
    L = np.linalg.cholesky(S)
    # K = P Hᵀ S⁻¹  via  S Kᵀ = H P
    Kt = np.linalg.solve(L.T, np.linalg.solve(L, H @ P))
    K = Kt.T
    dx = K @ innov
    a = dx[:3].copy()
    b_new = b + dx[3:]
    P_new = P @ (np.eye(6) - H.T @ K.T)
    P_new = 0.5 * (P_new + P_new.T)
    q_new = quat.normalize(quat.quat_mul(q, quat.exp_rotation(a)))
    return q_new, b_new, P_new, a, True


@njit(cache=True)
def _run(t, gyro, accel, static, q0, b0, P0, Q, R, diagnostics):
    n = t.shape[0]
    qs = np.empty((n, 4))
    bs = np.empty((n, 3))
    trace = np.empty(n)
    min_eig = np.full(n, np.nan)
    asym = np.full(n, np.nan)
    q, b, P = q0.copy(), b0.copy(), P0.copy()
    qs[0], bs[0], trace[0] = q, b, np.trace(P)
    for k in range(1, n):
        q, P = _predict(q, b, P, gyro[k], t[k] - t[k - 1], Q)
        if static[k]:
            q, b, P, _, ok = _correct(q, b, P, gyro[k], accel[k], R)
            if not ok:
                return qs, bs, trace, min_eig, asym, k
        qs[k], bs[k], trace[k] = q, b, np.trace(P)
        if diagnostics:
            min_eig[k] = np.linalg.eigvalsh(P)[0]
            asym[k] = np.max(np.abs(P - P.T))
    return qs, bs, trace, min_eig, asym, -1


# -- per-sample API ------------------------------------------------------------

def _as_sample(sample):
    if isinstance(sample, ImuSample):
        return sample
    row = np.asarray(sample, dtype=float)
    return ImuSample(float(row[0]), row[1:4], row[4:7])


def initial_state(calib, config, t0=0.0, bias_init="calibrated"):
    b0 = np.array(calib.bias0, dtype=float) if bias_init == "calibrated" else np.zeros(3)
    return FilterState(q_hat=np.array(calib.q0, dtype=float), b_hat=b0, P=config.P0.copy(), t=float(t0))


def predict(state, sample, config):
    """Propagate ``state`` to ``sample.t`` with the bias-corrected gyro rate."""
    sample = _as_sample(sample)
    dt = sample.t - state.t
    if dt <= 0:
        raise NonMonotoneTime(f"sample time {sample.t} does not follow state time {state.t}")
    if dt > MAX_DT:
        raise ExcessiveDt(f"time step {dt:.4f} s exceeds {MAX_DT} s")
    q, P = _predict(state.q_hat, state.b_hat, state.P, np.asarray(sample.gyro, dtype=float), dt, config.Q)
    return FilterState(q_hat=q, b_hat=state.b_hat.copy(), P=P, t=sample.t)


def correct(state, sample, config):
    """Static-phase measurement update followed by the attitude reset."""
    sample = _as_sample(sample)
    q, b, P, _, ok = _correct(
        state.q_hat,
        state.b_hat,
        state.P,
        np.asarray(sample.gyro, dtype=float),
        np.asarray(sample.accel, dtype=float),
        config.R,
    )
    if not ok:
        raise SingularInnovation(f"innovation covariance is singular at t={sample.t}")
    return FilterState(q_hat=q, b_hat=b, P=P, t=state.t)


def step(state, sample, window, calib, config):
    """Push ``sample`` into the detector, predict, and correct if the window is static."""
    sample = _as_sample(sample)
    window.push(sample.gyro, sample.accel)
    state = predict(state, sample, config)
    verdict = check_static(window, calib, config.noise)
    if verdict.is_static:
        state = correct(state, sample, config)
    return state, verdict


# -- batch results and estimator -------------------------------------------------

@dataclass
class FilterResult:
    """Per-sample output shared by every attitude filter in the package."""

    t: np.ndarray
    q: np.ndarray
    bias: np.ndarray
    static: np.ndarray
    trace_P: np.ndarray = None
    min_eig_P: np.ndarray = None
    asym_P: np.ndarray = None


class _AttitudeFilter(TransformerMixin, BaseEstimator):
    """Common ``fit``/``transform`` plumbing.

    ``fit`` takes a stationary calibration stream; ``transform`` filters a
    stream and returns its ``(n, 4)`` attitude quaternions.  Full per-sample
    output is available from :meth:`filter`.
    """

    def fit(self, X, y=None):
        X = check_stream(X)
        self.calibration_ = calibrate_stationary(X)
        self.n_features_in_ = X.shape[1]
        return self

    def _initial_bias(self):
        if self.bias_init == "calibrated":
            return np.array(self.calibration_.bias0, dtype=float)
        if self.bias_init == "zero":
            return np.zeros(3)
        raise ValueError(f"bias_init must be 'calibrated' or 'zero', got {self.bias_init!r}")

    def transform(self, X):
        return self.filter(X).q

    def filter(self, X):
        check_is_fitted(self, "calibration_")
        X = check_stream(X, min_samples=2)
        check_timing(X[:, 0])
        return self._filter(X)


class SMEKF(_AttitudeFilter):
    """Static-phase-gated multiplicative EKF for gyro + accelerometer data.

    Parameters
    ----------
    alpha, beta : float
        Allowed ratio between the window and calibrated gyro / accel variances.
    gamma1, gamma2 : float
        Tolerances on the mean and the variance of the accelerometer magnitude.
    window_n : int or None
        Detector window length in samples; ``None`` picks 0.2 s at the
        calibration sample rate.
    sigma_b : float
        Bias random-walk variance per axis, (rad/s)^2/s.
    p0_angle, p0_bias : float
        Initial standard deviations of the tilt error (rad) and bias (rad/s).
    p0_heading : float
        Initial standard deviation of the error angle about gravity (rad).
    bias_init : {'calibrated', 'zero'}
        Start from the calibration mean gyro or from zero bias.
    gating : {'detector', 'never', 'always'}
        When to run the correction step.  ``'never'`` gives open-loop gyro
        integration through the same prediction code.
    diagnostics : bool
        Record the smallest eigenvalue and asymmetry of ``P`` at every step.
    """

    def __init__(
        self,
        alpha=2.0,
        beta=2.0,
        gamma1=0.01,
        gamma2=0.01,
        window_n=None,
        sigma_b=1e-10,
        p0_angle=0.1,
        p0_bias=0.01,
        p0_heading=0.0,
        bias_init="calibrated",
        gating="detector",
        diagnostics=False,
    ):
        self.alpha = alpha
        self.beta = beta
        self.gamma1 = gamma1
        self.gamma2 = gamma2
        self.window_n = window_n
        self.sigma_b = sigma_b
        self.p0_angle = p0_angle
        self.p0_bias = p0_bias
        self.p0_heading = p0_heading
        self.bias_init = bias_init
        self.gating = gating
        self.diagnostics = diagnostics

    def fit(self, X, y=None):
        super().fit(X)
        window_n = self.window_n or default_window(self.calibration_.rate_hz)
        self.noise_ = NoiseParams(
            sigma_omega=self.calibration_.sigma_omega_hat,
            sigma_g=self.calibration_.sigma_g_hat,
            sigma_b=np.eye(3) * self.sigma_b,
            alpha=self.alpha,
            beta=self.beta,
            gamma1=self.gamma1,
            gamma2=self.gamma2,
            window_n=window_n,
        )
        self.config_ = FilterConfig.from_calibration(
            self.calibration_, self.noise_, self.p0_angle, self.p0_bias, self.p0_heading
        )
        return self

    def static_flags(self, X):
        X = check_stream(X)
        if self.gating == "detector":
            return static_conditions(X, self.calibration_, self.noise_).all(axis=1)
        if self.gating == "never":
            return np.zeros(len(X), dtype=bool)
        if self.gating == "always":
            return np.ones(len(X), dtype=bool)
        raise ValueError(f"unknown gating mode {self.gating!r}")

    def initial_state(self, t0=0.0):
        check_is_fitted(self, "config_")
        return replace(initial_state(self.calibration_, self.config_, t0), b_hat=self._initial_bias())

    def new_window(self):
        check_is_fitted(self, "noise_")
        return DetectorWindow(self.noise_.window_n)

    def _filter(self, X):
        static = self.static_flags(X)
        t = np.ascontiguousarray(X[:, 0])
        q, b, tr, me, asym, failed = _run(
            t,
            np.ascontiguousarray(X[:, 1:4]),
            np.ascontiguousarray(X[:, 4:7]),
            static,
            np.array(self.calibration_.q0, dtype=float),
            self._initial_bias(),
            self.config_.P0,
            self.config_.Q,
            self.config_.R,
            bool(self.diagnostics),
        )
        if failed >= 0:
            raise SingularInnovation(f"innovation covariance is singular at t={t[failed]}")
        if not self.diagnostics:
            me = asym = None
        return FilterResult(t=t, q=q, bias=b, static=static, trace_P=tr, min_eig_P=me, asym_P=asym)
