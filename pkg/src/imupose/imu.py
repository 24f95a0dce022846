"""IMU samples, the sensor noise model and stationary calibration.

Accelerometer readings are normalised by gravity, so a sensor at rest reads a
vector of unit length.  Gyroscope readings follow

    gyro = true_rate + bias + white noise,    d(bias)/dt = random walk
    accel = true_specific_force + white noise
"""

from dataclasses import dataclass, field

import numpy as np

from . import quat
from ._validation import check_stream
from .errors import DegenerateGravity, NotStationary, TooFewSamples

STANDARD_GRAVITY = 9.80665
MIN_CALIBRATION_SAMPLES = 200
MIN_CALIBRATION_SECONDS = 2.0
DETECTOR_WINDOW_SECONDS = 0.2
# still-sensor bounds: gyro scatter far above MEMS noise, or a rotating gravity vector
MAX_STILL_GYRO_STD = 0.05
MAX_GRAVITY_SPREAD = 0.02

# Typical consumer MEMS noise densities: 0.007 deg/s/sqrt(Hz), 120 ug/sqrt(Hz).
GYRO_NOISE_DENSITY = np.deg2rad(0.007)
ACCEL_NOISE_DENSITY = 120e-6


@dataclass(frozen=True)
class ImuSample:
    t: float
    gyro: np.ndarray
    accel: np.ndarray

    def as_row(self):
        return np.concatenate([[self.t], self.gyro, self.accel])


def _diag(v):
    return np.diag(np.full(3, float(v)))


@dataclass
class NoiseParams:
    """Sensor noise covariances and static-detector constants.

    ``sigma_b`` cannot be identified from a short static recording, so it is a
    configuration value rather than something :func:`calibrate_stationary`
    returns.
    """

    sigma_omega: np.ndarray = field(default_factory=lambda: _diag(3e-3**2))
    sigma_g: np.ndarray = field(default_factory=lambda: _diag(3e-3**2))
    sigma_b: np.ndarray = field(default_factory=lambda: _diag(1e-10))
    alpha: float = 2.0
    beta: float = 2.0
    gamma1: float = 0.01
    gamma2: float = 0.01
    window_n: int = 20

    def __post_init__(self):
        for name in ("sigma_omega", "sigma_g", "sigma_b"):
            S = np.asarray(getattr(self, name), dtype=float)
            if S.ndim == 1:
                S = np.diag(S)
            if S.shape != (3, 3) or not np.allclose(S, S.T) or np.linalg.eigvalsh(S).min() < -1e-15:
                raise ValueError(f"{name} must be a symmetric PSD 3x3 matrix")
            setattr(self, name, S)
        if min(self.alpha, self.beta, self.gamma1, self.gamma2) <= 0:
            raise ValueError("detector constants must be positive")
        if self.window_n < 2:
            raise ValueError("window_n must be at least 2")

    @classmethod
    def from_density(cls, rate_hz, gyro_density=GYRO_NOISE_DENSITY, accel_density=ACCEL_NOISE_DENSITY, **kw):
        """White-noise covariances for a sensor sampled at ``rate_hz`` (Nyquist bandwidth)."""
        bw = 0.5 * rate_hz
        kw.setdefault("window_n", default_window(rate_hz))
        return cls(
            sigma_omega=_diag(gyro_density**2 * bw),
            sigma_g=_diag(accel_density**2 * bw),
            **kw,
        )


def default_window(rate_hz):
    return max(2, int(round(DETECTOR_WINDOW_SECONDS * rate_hz)))


@dataclass(frozen=True)
class SensorCalibration:
    sigma_omega_hat: np.ndarray
    sigma_g_hat: np.ndarray
    bias0: np.ndarray
    q0: np.ndarray
    sample_count: int
    rate_hz: float

    @property
    def mean_accel(self):
        return quat.gravity_in_body(self.q0)


def initial_attitude_from_gravity(mean_accel):
    """Level the sensor from its average accelerometer reading.

    Returns the zero-yaw attitude whose body-frame up-vector points along
    ``mean_accel``.  A sensor lying upside down resolves to a half turn about x.
    """
    a = np.asarray(mean_accel, dtype=float)
    norm = np.linalg.norm(a)
    if not 0.8 <= norm <= 1.2:
        raise DegenerateGravity(f"mean accelerometer magnitude {norm:.3f} g is not near 1 g")
    a = a / norm
    roll = np.arctan2(a[1], a[2])
    pitch = np.arctan2(-a[0], np.hypot(a[1], a[2]))
    return quat.from_euler_zyx(roll, pitch, 0.0)


def _motion_spikes(gyro, n_blocks=10):
    """True when some block of the stream is far noisier than the typical block."""
    blocks = np.array_split(gyro, n_blocks)
    var = np.array([b.var(axis=0) for b in blocks])
    typical = np.median(var, axis=0)
    return bool(np.any(var > 10.0 * typical + 1e-12))


def calibrate_stationary(samples, min_samples=MIN_CALIBRATION_SAMPLES):
    """Estimate noise covariances, initial bias and attitude from a still sensor.

    Parameters
    ----------
    samples : array of shape (n, 7) or sequence of ImuSample
        Stream recorded while the IMU lies still.
    min_samples : int
        Lower bound on the sample count; the stream must also span at least
        two seconds.

    Returns
    -------
    SensorCalibration
    """
    X = check_stream(samples)
    n = len(X)
    dt = np.median(np.diff(X[:, 0])) if n > 1 else np.inf
    if n < min_samples or n * dt < MIN_CALIBRATION_SECONDS - 1e-9:
        raise TooFewSamples(
            f"calibration needs >= {min_samples} samples and >= {MIN_CALIBRATION_SECONDS} s, got {n}"
        )
    gyro, accel = X[:, 1:4], X[:, 4:7]
    g_norm = np.linalg.norm(accel, axis=1).mean()
    if abs(g_norm - 1.0) > 0.05:
        raise NotStationary(f"mean accelerometer magnitude {g_norm:.4f} g differs from 1 g by more than 0.05")
    if _motion_spikes(gyro):
        raise NotStationary("gyroscope variance is not uniform across the calibration stream")
    if np.any(gyro.std(axis=0) > MAX_STILL_GYRO_STD):
        raise NotStationary(f"gyroscope scatter exceeds {MAX_STILL_GYRO_STD} rad/s")
    if g_norm - np.linalg.norm(accel.mean(axis=0)) > MAX_GRAVITY_SPREAD:
        raise NotStationary("gravity direction changes during the calibration stream")
    # centring on the first row keeps a constant stream's statistics exact
    d_gyro, d_accel = gyro - gyro[0], accel - accel[0]
    mean_accel = accel[0] + d_accel.mean(axis=0)
    return SensorCalibration(
        sigma_omega_hat=np.cov(d_gyro, rowvar=False),
        sigma_g_hat=np.cov(d_accel, rowvar=False),
        bias0=gyro[0] + d_gyro.mean(axis=0),
        q0=initial_attitude_from_gravity(mean_accel),
        sample_count=n,
        rate_hz=float(1.0 / dt),
    )
