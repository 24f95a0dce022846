"""Synthetic IMU data with exact ground truth.

Attitude trajectories are closed-form functions of time assembled from phases:

* ``static``: hold the attitude.
* ``rotate``: turn by a fixed rotation vector with a smooth start and stop.
* ``shake``: like ``rotate`` but with a superimposed wobble and linear
  acceleration, both faded in and out over ``ramp`` seconds.

Sample ``k`` reports the mean body rate over ``(t[k-1], t[k]]``, i.e.
``log(q[k-1]⁻¹ q[k]) / dt``, so chaining ``exp(rate·dt)`` reproduces the true
attitude to round-off.  Specific force is sampled at ``t[k]``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kinematics as kin
from . import quat
from .errors import InvalidSpec, MisalignedSpecs
from .imu import STANDARD_GRAVITY, NoiseParams

PHASE_KINDS = ("static", "rotate", "shake")
_GRAVITY_UP = np.array([0.0, 0.0, 1.0])
_FD_STEP = 1e-3


def smooth_step(u):
    """0 -> 1 on [0, 1] with zero slope at both ends."""
    u = np.clip(u, 0.0, 1.0)
    return u - np.sin(2.0 * np.pi * u) / (2.0 * np.pi)


def _envelope(tau, duration, ramp):
    """Fade in over ``ramp`` seconds, hold at 1, fade out; zero slope at the ends."""
    r = min(ramp, 0.5 * duration)
    return smooth_step(tau / r) * smooth_step((duration - tau) / r)


@dataclass(frozen=True)
class Phase:
    kind: str
    duration: float
    rotation: tuple = (0.0, 0.0, 0.0)
    rate_amplitude: float = 0.0
    specific_force: float = 0.0
    ramp: float = 1.0

    def __post_init__(self):
        if self.kind not in PHASE_KINDS:
            raise InvalidSpec(f"unknown phase kind {self.kind!r}")
        if not self.duration > 0:
            raise InvalidSpec("phase duration must be positive")
        if len(self.rotation) != 3:
            raise InvalidSpec("rotation must be a 3-vector")
        if self.kind == "static" and (np.any(np.asarray(self.rotation)) or self.rate_amplitude or self.specific_force):
            raise InvalidSpec("static phases cannot move")
        if self.rate_amplitude < 0 or self.specific_force < 0:
            raise InvalidSpec("amplitudes must be non-negative")
        if not self.ramp > 0:
            raise InvalidSpec("ramp must be positive")


class _Wobble:
    """Per-axis sums of sinusoids with random frequencies and phases."""

    def __init__(self, rng, amplitude, f_lo, f_hi, n_terms=2):
        self.freq = rng.uniform(f_lo, f_hi, (3, n_terms))
        self.phase = rng.uniform(0.0, 2.0 * np.pi, (3, n_terms))
        self.amp = amplitude / n_terms

    def value(self, tau):
        arg = 2.0 * np.pi * self.freq[None] * tau[:, None, None] + self.phase[None]
        return self.amp * np.sin(arg).sum(axis=2)

    def integral(self, tau):
        """Antiderivative of :meth:`value` (peak rate equals the amplitude)."""
        w = 2.0 * np.pi * self.freq[None]
        arg = w * tau[:, None, None] + self.phase[None]
        return -(self.amp / w * np.cos(arg)).sum(axis=2)


@dataclass(frozen=True)
class TrajectorySpec:
    """Piecewise attitude trajectory of one rigid body.

    ``q0`` is the initial body-to-world attitude.  ``seed`` fixes the random
    wobble of ``shake`` phases.
    """

    sample_rate: float
    phases: tuple
    q0: tuple = (1.0, 0.0, 0.0, 0.0)
    seed: int = 0
    _wobbles: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise InvalidSpec("sample_rate must be positive")
        if not self.phases:
            raise InvalidSpec("at least one phase is required")
        n = self.duration * self.sample_rate
        if abs(n - round(n)) > 1e-6:
            raise InvalidSpec("duration must be a whole number of sample periods")
        if abs(np.linalg.norm(self.q0) - 1.0) > 1e-9:
            raise InvalidSpec("q0 must be a unit quaternion")
        rng = np.random.default_rng([self.seed, 0])
        wobbles = []
        for ph in self.phases:
            if ph.kind == "shake":
                wobbles.append((_Wobble(rng, ph.rate_amplitude, 0.3, 2.0), _Wobble(rng, ph.specific_force, 0.5, 3.0)))
            else:
                wobbles.append(None)
        object.__setattr__(self, "_wobbles", wobbles)

    @property
    def duration(self):
        return float(sum(p.duration for p in self.phases))

    @property
    def n_samples(self):
        return int(round(self.duration * self.sample_rate)) + 1

    def times(self):
        return np.arange(self.n_samples) / self.sample_rate

    def _starts(self):
        starts = np.concatenate([[0.0], np.cumsum([p.duration for p in self.phases])])
        qs = [np.asarray(self.q0, dtype=float)]
        for ph in self.phases:
            qs.append(quat.quat_mul(qs[-1], quat.exp_rotation(np.asarray(ph.rotation, dtype=float))))
        return starts, qs

    def _locate(self, t):
        starts, qs = self._starts()
        idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(self.phases) - 1)
        return starts, qs, idx

    def attitudes(self, t):
        """True body-to-world quaternions at times ``t``, shape (n, 4)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        starts, qs, idx = self._locate(t)
        out = np.empty((len(t), 4))
        for i, ph in enumerate(self.phases):
            m = idx == i
            if not m.any():
                continue
            tau = t[m] - starts[i]
            u = tau / ph.duration
            base = np.tile(qs[i], (int(m.sum()), 1))
            if ph.kind == "static":
                out[m] = base
                continue
            rv = smooth_step(u)[:, None] * np.asarray(ph.rotation, dtype=float)
            q = quat.quat_mul_many(base, quat.exp_rotation_many(rv))
            if ph.kind == "shake":
                env = _envelope(tau, ph.duration, ph.ramp)[:, None]
                wob = env * (self._wobbles[i][0].integral(tau) - self._wobbles[i][0].integral(np.zeros(1)))
                q = quat.quat_mul_many(q, quat.exp_rotation_many(wob))
            out[m] = q
        return out

    def linear_acceleration(self, t):
        """World-frame linear acceleration in g at times ``t``, shape (n, 3)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        starts, _, idx = self._locate(t)
        out = np.zeros((len(t), 3))
        for i, ph in enumerate(self.phases):
            m = idx == i
            if ph.kind != "shake" or not m.any():
                continue
            tau = t[m] - starts[i]
            out[m] = _envelope(tau, ph.duration, ph.ramp)[:, None] * self._wobbles[i][1].value(tau)
        return out


@dataclass
class GroundTruth:
    t: np.ndarray
    q: np.ndarray
    rate: np.ndarray
    specific_force: np.ndarray
    bias: np.ndarray


@dataclass
class BodyRecording:
    """Truth and IMU streams of a simulated upper-body session."""

    t: np.ndarray
    truth: dict
    streams: dict
    hands: dict
    model: kin.BodyModel


def _sqrt_psd(S):
    w, V = np.linalg.eigh(np.asarray(S, dtype=float))
    return V * np.sqrt(np.clip(w, 0.0, None))


def true_rates(q, dt):
    """Mean body rates over each sample interval; row 0 copies row 1."""
    rel = quat.quat_mul_many(quat.conj_many(q[:-1]), q[1:])
    w = quat.log_rotation_many(rel) / dt
    return np.vstack([w[:1] if len(w) else np.zeros((1, 3)), w])


def synthesize(t, q, accel_world, noise=None, bias=None, bias_walk=False, seed=0):
    """Turn truth into a noisy ``(n, 7)`` stream.

    ``accel_world`` is the linear acceleration in g.  ``bias`` is the turn-on
    gyro bias; with ``bias_walk`` it drifts as a random walk with covariance
    ``noise.sigma_b`` per second.
    """
    n = len(t)
    dt = float(np.median(np.diff(t)))
    rate = true_rates(q, dt)
    R = quat.rotation_matrices(q)
    f_world = np.asarray(accel_world, dtype=float) + _GRAVITY_UP
    f_body = np.einsum("nji,nj->ni", R, f_world)
    b = np.tile(np.zeros(3) if bias is None else np.asarray(bias, dtype=float), (n, 1))
    rng = np.random.default_rng([seed, 1])
    X = np.empty((n, 7))
    X[:, 0] = t
    X[:, 1:4] = rate
    X[:, 4:7] = f_body
    if noise is not None:
        if bias_walk:
            steps = rng.standard_normal((n, 3)) @ _sqrt_psd(noise.sigma_b * dt).T
            steps[0] = 0.0
            b = b + np.cumsum(steps, axis=0)
        X[:, 1:4] += rng.standard_normal((n, 3)) @ _sqrt_psd(noise.sigma_omega).T
        X[:, 4:7] += rng.standard_normal((n, 3)) @ _sqrt_psd(noise.sigma_g).T
    X[:, 1:4] += b
    return GroundTruth(t=t, q=q, rate=rate, specific_force=f_body, bias=b), X


def generate(spec, noise=None, bias=None, bias_walk=False, seed=None):
    """Simulate one IMU following ``spec``; returns ``(GroundTruth, stream)``.

    ``noise=None`` gives a noiseless (bias-only) stream.  ``seed`` defaults to
    ``spec.seed`` and only affects the sensor noise.
    """
    t = spec.times()
    q = spec.attitudes(t)
    return synthesize(t, q, spec.linear_acceleration(t), noise, bias, bias_walk, spec.seed if seed is None else seed)


def sensor_sites(model, attitudes):
    """Sensor positions (mid-segment; chest sensor at the chest origin), (n, 3) each."""
    joints = kin.joint_positions(model, attitudes)
    n = len(attitudes["chest"])
    sites = {"chest": np.zeros((n, 3))}
    for side in kin.SIDES:
        sites[f"upper_arm_{side}"] = 0.5 * (joints[f"shoulder_{side}"] + joints[f"elbow_{side}"])
        sites[f"forearm_{side}"] = 0.5 * (joints[f"elbow_{side}"] + joints[f"hand_{side}"])
    return sites


def _segment_attitudes(specs, t):
    return {seg: np.atleast_2d(specs[seg].attitudes(t)) for seg in kin.SEGMENTS}


def generate_body(model, specs, noise=None, biases=None, seed=0):
    """Simulate the five segment IMUs of an upper body.

    ``specs`` maps segment name to an object with ``sample_rate``,
    ``duration`` and ``attitudes(t)``; all must share rate and duration.
    Sensor accelerations come from the forward kinematics of ``model`` by
    central differences.
    """
    for seg in kin.SEGMENTS:
        if seg not in specs:
            raise MisalignedSpecs(f"no trajectory for segment {seg!r}")
    rates = {float(specs[s].sample_rate) for s in kin.SEGMENTS}
    durations = {round(float(specs[s].duration), 9) for s in kin.SEGMENTS}
    if len(rates) != 1 or len(durations) != 1:
        raise MisalignedSpecs("segment trajectories differ in sample rate or duration")
    rate, duration = rates.pop(), durations.pop()
    t = np.arange(int(round(duration * rate)) + 1) / rate
    att = _segment_attitudes(specs, t)
    h = _FD_STEP
    p_lo = sensor_sites(model, _segment_attitudes(specs, t - h))
    p_mid = sensor_sites(model, att)
    p_hi = sensor_sites(model, _segment_attitudes(specs, t + h))
    biases = biases or {}
    truth, streams = {}, {}
    for i, seg in enumerate(kin.SEGMENTS):
        acc = (p_hi[seg] - 2.0 * p_mid[seg] + p_lo[seg]) / (h * h) / STANDARD_GRAVITY
        truth[seg], streams[seg] = synthesize(t, att[seg], acc, noise, biases.get(seg), seed=seed + 7919 * (i + 1))
    joints = kin.joint_positions(model, att)
    hands = {k: joints[k] for k in ("hand_left", "hand_right")}
    return BodyRecording(t=t, truth=truth, streams=streams, hands=hands, model=model)


# -- segment motions ------------------------------------------------------------

@dataclass(frozen=True)
class HeldMotion:
    """A segment that keeps one attitude."""

    q: tuple
    sample_rate: float
    duration: float

    def attitudes(self, t):
        return np.tile(np.asarray(self.q, dtype=float), (len(np.atleast_1d(t)), 1))


@dataclass(frozen=True)
class LoopMotion:
    """World-frame rotation loops about a base attitude.

    Each loop ``(start, length, amplitude, e1, e2)`` traces the rotation
    vector ``amplitude·[(cos 2πs - 1) e1 + sin 2πs e2]`` with ``s`` a smooth
    ramp of time, returning exactly to the base attitude at the end.
    """

    base: tuple
    loops: tuple
    sample_rate: float
    duration: float

    def attitudes(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        rv = np.zeros((len(t), 3))
        for start, length, amp, e1, e2 in self.loops:
            m = (t > start) & (t < start + length)
            s = 2.0 * np.pi * smooth_step((t[m] - start) / length)
            rv[m] += amp * ((np.cos(s) - 1.0)[:, None] * np.asarray(e1) + np.sin(s)[:, None] * np.asarray(e2))
        base = np.tile(np.asarray(self.base, dtype=float), (len(t), 1))
        return quat.quat_mul_many(quat.exp_rotation_many(rv), base)


def _two_link(shoulder, target, l1, l2, swivel, side_sign):
    """Elbow position reaching ``target`` (n, 3) with a given swivel angle about the shoulder-target line."""
    d_vec = target - shoulder
    d = np.linalg.norm(d_vec, axis=1)
    if np.any(d >= l1 + l2) or np.any(d <= abs(l1 - l2)):
        raise InvalidSpec("meeting point out of reach")
    n = d_vec / d[:, None]
    a = (l1 * l1 - l2 * l2 + d * d) / (2.0 * d)
    r = np.sqrt(l1 * l1 - a * a)
    down = np.array([0.0, 0.0, -1.0])
    u = down - (n @ down)[:, None] * n
    u /= np.linalg.norm(u, axis=1)[:, None]
    w = np.cross(n, u)
    centre = shoulder + a[:, None] * n
    return centre + r[:, None] * (np.cos(swivel)[:, None] * u + side_sign * np.sin(swivel)[:, None] * w)


def _pointing_many(axis, d):
    d = d / np.linalg.norm(d, axis=1)[:, None]
    return np.array([quat.shortest_arc(axis, v) for v in d])


class ClosedChainMotion:
    """Hands-together session: hold a start posture, join palms, move them around.

    The palms meet at a smoothly wandering point in front of the chest; elbow
    swivel and bone twist also vary.  Arm attitudes come from two-link inverse
    kinematics of ``model``.  ``chain_interval`` gives the time span during
    which the palms are together.
    """

    def __init__(
        self,
        model,
        sample_rate=100.0,
        hold=3.0,
        transition=3.0,
        active=20.0,
        start="tpose",
        meet=(0.38, 0.0, -0.12),
        reach=0.12,
        swivel=0.5,
        twist=0.4,
        seed=0,
    ):
        self.model = model
        self.sample_rate = float(sample_rate)
        self.hold, self.transition, self.active = hold, transition, active
        self.duration = hold + transition + active + 1.0
        self.start = kin.start_posture(start)
        self.meet = np.asarray(meet, dtype=float)
        rng = np.random.default_rng([seed, 2])
        self._path = _Wobble(rng, reach, 0.08, 0.25)
        self._swivel = _Wobble(rng, swivel, 0.08, 0.25)
        self._twist = _Wobble(rng, twist, 0.1, 0.3)

    @property
    def chain_interval(self):
        t0 = self.hold + self.transition
        return t0, t0 + self.active

    def _chain(self, tau):
        env = smooth_step(tau / 3.0)[:, None]
        target = self.meet + env * (self._path.value(tau) - self._path.value(np.zeros(1)))
        swivel = 0.4 + env[:, 0] * (self._swivel.value(tau)[:, 0] - self._swivel.value(np.zeros(1))[0, 0])
        twist = env * (self._twist.value(tau) - self._twist.value(np.zeros(1)))
        L = self.model.lengths
        out = {"chest": np.tile(quat.identity(), (len(tau), 1))}
        for j, (side, sign) in enumerate((("left", 1.0), ("right", -1.0))):
            shoulder = L["shoulder"] * kin.LATERAL[side]
            ua, fa = f"upper_arm_{side}", f"forearm_{side}"
            elbow = _two_link(shoulder[None], target, L[ua], L[fa], swivel, sign)
            for seg, d, tw in ((ua, elbow - shoulder, twist[:, j]), (fa, target - elbow, twist[:, 2] * sign)):
                axis = kin.BONE_AXIS[seg]
                q = _pointing_many(axis, d)
                out[seg] = quat.quat_mul_many(q, quat.exp_rotation_many(tw[:, None] * axis))
        return out

    def segment_attitudes(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        t0 = self.hold + self.transition
        chain = self._chain(np.clip(t - t0, 0.0, None))
        u = smooth_step((t - self.hold) / self.transition)
        joined = self._chain(np.zeros(1))
        out = {}
        for seg in kin.SEGMENTS:
            start = np.tile(self.start[seg], (len(t), 1))
            rel = quat.log_rotation(quat.quat_mul(quat.conj(self.start[seg]), joined[seg][0]))
            moving = quat.quat_mul_many(start, quat.exp_rotation_many(u[:, None] * rel))
            out[seg] = np.where((t >= t0)[:, None], chain[seg], moving)
        return out

    def segment(self, name):
        return _SegmentView(self, name)

    def specs(self):
        return {s: self.segment(s) for s in kin.SEGMENTS}


@dataclass(frozen=True)
class _SegmentView:
    motion: ClosedChainMotion
    name: str

    @property
    def sample_rate(self):
        return self.motion.sample_rate

    @property
    def duration(self):
        return self.motion.duration

    def attitudes(self, t):
        return self.motion.segment_attitudes(t)[self.name]


# -- presets ----------------------------------------------------------------------

def _random_start(rng, max_tilt_deg=10.0):
    yaw = rng.uniform(-np.pi, np.pi)
    tilt = np.deg2rad(rng.uniform(0.0, max_tilt_deg))
    heading = rng.uniform(0.0, 2.0 * np.pi)
    axis = np.array([np.cos(heading), np.sin(heading), 0.0])
    return tuple(quat.quat_mul(quat.from_euler_zyx(0.0, 0.0, yaw), quat.exp_rotation(tilt * axis)))


def _random_rotation(rng, lo, hi):
    v = rng.standard_normal(3)
    return tuple(v / np.linalg.norm(v) * rng.uniform(lo, hi))


def drift_spec(sample_rate=1000.0, seed=0, static=25.0, shake=10.0):
    """Still, vigorous shake, still: exercises bias learning and heading drift."""
    rng = np.random.default_rng([seed, 3])
    phases = (
        Phase("static", static),
        Phase("shake", shake, _random_rotation(rng, 0.5, 1.5), rate_amplitude=3.0, specific_force=0.5),
        Phase("static", static),
    )
    return TrajectorySpec(sample_rate, phases, q0=_random_start(rng), seed=seed)


def dynamic_spec(sample_rate=100.0, seed=0, lead=5.0, active=50.0, tail=5.0):
    """Mostly continuous motion framed by short still periods."""
    rng = np.random.default_rng([seed, 3])
    phases = (
        Phase("static", lead),
        Phase("shake", active, _random_rotation(rng, 0.5, 2.0), rate_amplitude=1.0, specific_force=0.3),
        Phase("static", tail),
    )
    return TrajectorySpec(sample_rate, phases, q0=_random_start(rng), seed=seed)


DRIFT_BIAS = (0.02, 0.02, 0.02)


def random_bias(rng, scale=0.01):
    return rng.uniform(-scale, scale, 3)


def circles_specs(sample_rate=100.0, n_loops=6, loop=3.0, pause=2.0, lead=3.0, seed=0):
    """Seated at a table, the right hand draws ``n_loops`` circles; the rest stays still.

    Returns ``(specs, posture name)``; the session starts in the ``'table'`` posture.
    """
    rng = np.random.default_rng([seed, 4])
    posture = kin.start_posture("table")
    duration = lead + n_loops * (loop + pause)
    loops_ua, loops_fa = [], []
    for i in range(n_loops):
        start = lead + i * (loop + pause)
        a_ua, a_fa = rng.uniform(0.15, 0.25), rng.uniform(0.2, 0.3)
        loops_ua.append((start, loop, a_ua, (0.0, 1.0, 0.0), (1.0, 0.0, 0.0)))
        loops_fa.append((start, loop, a_fa, (0.0, 0.0, 1.0), (0.0, 1.0, 0.0)))
    specs = {seg: HeldMotion(tuple(posture[seg]), sample_rate, duration) for seg in kin.SEGMENTS}
    specs["upper_arm_right"] = LoopMotion(tuple(posture["upper_arm_right"]), tuple(loops_ua), sample_rate, duration)
    specs["forearm_right"] = LoopMotion(tuple(posture["forearm_right"]), tuple(loops_fa), sample_rate, duration)
    return specs, "table"


def default_noise(sample_rate, sigma_b=1e-10):
    return NoiseParams.from_density(sample_rate, sigma_b=np.eye(3) * sigma_b)
