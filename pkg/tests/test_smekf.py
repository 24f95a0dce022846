import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from imupose import quat, sim
from imupose.errors import ExcessiveDt, NonMonotoneTime, SingularInnovation
from imupose.experiments import run_experiment
from imupose.imu import ImuSample, NoiseParams
from imupose.smekf import (
    SMEKF,
    FilterConfig,
    FilterState,
    correct,
    initial_state,
    measurement_matrix,
    predict,
    step,
    transition_matrices,
)

from conftest import make_stream, random_quats

CAL_STREAM = make_stream(500, gyro_std=1e-3, accel_std=1e-3, seed=3)


@pytest.fixture(scope="module")
def fitted():
    return SMEKF().fit(CAL_STREAM)


def _state(q, b, P, t=0.0):
    return FilterState(q_hat=np.asarray(q, float), b_hat=np.asarray(b, float), P=np.asarray(P, float), t=t)


def _spd(rng, scale=1e-2):
    A = rng.normal(size=(6, 6)) * scale
    return A @ A.T + 1e-6 * np.eye(6)


def test_zero_net_rate_keeps_attitude(fitted):
    b = np.array([0.01, -0.02, 0.005])
    s0 = _state(quat.from_euler_zyx(0.1, 0.2, 0.3), b, fitted.config_.P0)
    s1 = predict(s0, ImuSample(0.01, b, np.array([0.0, 0.0, 1.0])), fitted.config_)
    np.testing.assert_array_equal(s1.q_hat, s0.q_hat)
    assert np.trace(s1.P) > np.trace(s0.P)
    assert s1.t == 0.01


def test_constant_rate_half_turn(fitted):
    s = _state(quat.identity(), np.zeros(3), fitted.config_.P0)
    w = np.array([0.0, 0.0, math.pi])
    for k in range(1, 1001):
        s = predict(s, ImuSample(k * 1e-3, w, np.zeros(3)), fitted.config_)
    assert quat.angle_between(s.q_hat, np.array([0.0, 0.0, 0.0, 1.0])) <= 1e-6


def test_transition_matches_true_error_propagation():
    # a' = log((q ⊗ exp(w_hat dt))⁻¹ ⊗ q ⊗ exp(a) ⊗ exp((w_hat + b_hat - b) dt)) agrees with F to first order in dt
    rng = np.random.default_rng(5)
    for _ in range(50):
        w_hat, b_hat = rng.normal(0, 1.0, 3), rng.normal(0, 0.01, 3)
        dt = 1e-3

        def prop(x):
            a, b = x[:3], x[3:]
            est = quat.exp_rotation(w_hat * dt)
            true = quat.quat_mul(quat.exp_rotation(a), quat.exp_rotation((w_hat + b_hat - b) * dt))
            return np.concatenate([quat.log_rotation(quat.quat_mul(quat.conj(est), true)), b])

        x0 = np.concatenate([np.zeros(3), b_hat])
        J = np.column_stack([(prop(x0 + e) - prop(x0 - e)) / 2e-7 for e in 1e-7 * np.eye(6)])
        F, G = transition_matrices(w_hat, dt)
        np.testing.assert_allclose(J, F, atol=5 * dt**2 * (1 + np.linalg.norm(w_hat)) ** 2 + 1e-7)
        np.testing.assert_array_equal(G, dt * np.diag([-1, -1, -1, 1, 1, 1]))


def test_measurement_matrix_structure(rng):
    for q in random_quats(rng, 20):
        H = measurement_matrix(q)
        np.testing.assert_array_equal(H[3:, 3:], np.eye(3))
        np.testing.assert_array_equal(H[:3, 3:], 0.0)
        np.testing.assert_array_equal(H[3:, :3], 0.0)
        np.testing.assert_allclose(H[:3, :3], quat.skew(quat.gravity_in_body(q)), atol=1e-15)


def test_zero_innovation(fitted, rng):
    for q in random_quats(rng, 10):
        b = rng.normal(0, 0.01, 3)
        s0 = _state(q, b, fitted.config_.P0)
        s1 = correct(s0, ImuSample(0.0, b, quat.gravity_in_body(q)), fitted.config_)
        assert quat.angle_between(s0.q_hat, s1.q_hat) <= 1e-12
        np.testing.assert_allclose(s1.b_hat, b, atol=1e-15)
        assert np.trace(s1.P) < np.trace(s0.P)


def test_roll_error_removed_in_one_step(fitted):
    cfg = FilterConfig(noise=fitted.noise_, R=1e-12 * np.eye(6), Q=fitted.config_.Q, P0=0.01 * np.eye(6))
    s0 = _state(quat.from_euler_zyx(math.radians(2.0), 0.0, 0.0), np.zeros(3), cfg.P0)
    s1 = correct(s0, ImuSample(0.0, np.zeros(3), np.array([0.0, 0.0, 1.0])), cfg)
    assert abs(math.degrees(quat.to_euler_zyx(s1.q_hat)[0])) <= 0.02


def test_bias_learned_from_static_corrections(fitted):
    s = fitted.initial_state()
    s = _state(s.q_hat, np.zeros(3), s.P)
    sample = ImuSample(0.0, np.array([0.01, 0.0, 0.0]), quat.gravity_in_body(s.q_hat))
    for _ in range(100):
        s = correct(s, sample, fitted.config_)
    assert np.linalg.norm(s.b_hat - [0.01, 0.0, 0.0]) <= 1e-3


@given(st.integers(0, 2**32 - 1))
def test_correction_never_increases_trace(seed):
    rng = np.random.default_rng(seed)
    R = np.diag(rng.uniform(1e-8, 1e-3, 6))
    cfg = FilterConfig(noise=NoiseParams(), R=R, Q=np.eye(6) * 1e-8, P0=_spd(rng))
    q = random_quats(rng, 1)[0]
    s0 = _state(q, rng.normal(0, 0.01, 3), cfg.P0)
    s1 = correct(s0, ImuSample(0.0, rng.normal(0, 0.02, 3), rng.normal([0, 0, 1], 0.02)), cfg)
    assert np.trace(s1.P) <= np.trace(s0.P) + 1e-15
    np.testing.assert_array_equal(s1.P, s1.P.T)
    assert np.linalg.eigvalsh(s1.P).min() >= -1e-12


def test_singular_innovation_raises(fitted):
    cfg = FilterConfig(noise=fitted.noise_, R=np.zeros((6, 6)), Q=fitted.config_.Q, P0=np.zeros((6, 6)))
    s = _state(quat.identity(), np.zeros(3), cfg.P0)
    with pytest.raises(SingularInnovation):
        correct(s, ImuSample(0.0, np.zeros(3), np.array([0.0, 0.0, 1.0])), cfg)


def test_predict_timing_errors(fitted):
    s = _state(quat.identity(), np.zeros(3), fitted.config_.P0, t=1.0)
    with pytest.raises(NonMonotoneTime):
        predict(s, ImuSample(1.0, np.zeros(3), np.zeros(3)), fitted.config_)
    with pytest.raises(ExcessiveDt):
        predict(s, ImuSample(1.2, np.zeros(3), np.zeros(3)), fitted.config_)


def test_filter_timing_errors(fitted):
    X = make_stream(50)
    X[20, 0] = X[19, 0]
    with pytest.raises(NonMonotoneTime):
        fitted.filter(X)
    X = make_stream(50)
    X[30:, 0] += 0.5
    with pytest.raises(ExcessiveDt):
        fitted.filter(X)


def test_initial_covariance_is_tight_about_gravity():
    r = math.radians(20.0)
    X = make_stream(300, accel=(0.0, math.sin(r), math.cos(r)), gyro_std=1e-3, accel_std=1e-3)
    est = SMEKF(p0_angle=0.1, p0_heading=0.0).fit(X)
    P = est.config_.P0
    u = est.calibration_.mean_accel
    assert u @ P[:3, :3] @ u == pytest.approx(1e-10, rel=1e-6)
    v = np.cross(u, [1.0, 0.0, 0.0])
    v /= np.linalg.norm(v)
    assert v @ P[:3, :3] @ v == pytest.approx(0.01, rel=1e-9)
    np.testing.assert_allclose(P[3:, 3:], 1e-4 * np.eye(3))
    est = SMEKF(p0_heading=0.2).fit(X)
    assert u @ est.config_.P0[:3, :3] @ u == pytest.approx(0.04, rel=1e-9)


def test_prediction_only_is_plain_gyro_integration():
    rng = np.random.default_rng(6)
    X = make_stream(300, gyro_std=0.0)
    X[:, 1:4] = rng.normal(0.0, 1.0, (300, 3))
    est = SMEKF(gating="never").fit(CAL_STREAM)
    res = est.filter(X)
    q, b = est.calibration_.q0.copy(), est.calibration_.bias0
    expected = [q]
    for k in range(1, 300):
        q = quat.quat_mul(q, quat.exp_rotation((X[k, 1:4] - b) * (X[k, 0] - X[k - 1, 0])))
        expected.append(q)
    np.testing.assert_array_equal(res.q, np.array(expected))
    assert not res.static.any()


def test_never_static_stream_equals_prediction_only():
    t = np.arange(1000) / 100.0
    q = quat.exp_rotation_many(0.5 * np.sin(2 * np.pi * t)[:, None] * [0.0, 0.6, 0.8])
    _, X = sim.synthesize(t, q, np.zeros((1000, 3)), sim.default_noise(100.0), seed=1)
    gated = SMEKF().fit(CAL_STREAM).filter(X)
    assert not gated.static.any()
    np.testing.assert_array_equal(gated.q, SMEKF(gating="never").fit(CAL_STREAM).transform(X))


def test_static_stream_keeps_heading():
    spec = sim.TrajectorySpec(100.0, (sim.Phase("static", 10.0),), q0=tuple(quat.from_euler_zyx(0.1, -0.2, 1.0)))
    truth, X = sim.generate(spec, sim.default_noise(100.0), bias=[0.01, -0.005, 0.02], seed=4)
    res = SMEKF().fit(X[:250]).filter(X)
    yaw = np.degrees(quat.euler_zyx_many(res.q)[:, 2])
    assert np.max(np.abs(yaw - yaw[0])) <= 0.5


def test_drift_protocol_recovers_within_five_seconds():
    report = run_experiment("drift", "smekf", seed=1)
    settled = report.t >= 35.0 + 5.0
    assert report.errors_deg[settled].max() < 1.0


def test_per_sample_api_matches_batch(fitted):
    spec = sim.TrajectorySpec(
        100.0, (sim.Phase("static", 3.0), sim.Phase("rotate", 2.0, (0.3, 0.2, 0.5)), sim.Phase("static", 2.0))
    )
    _, X = sim.generate(spec, sim.default_noise(100.0), bias=[0.01, 0.0, 0.0], seed=2)
    est = SMEKF().fit(X[:250])
    batch = est.filter(X)
    state, window = est.initial_state(X[0, 0]), est.new_window()
    window.push(X[0, 1:4], X[0, 4:7])
    flags = [False]
    qs = [state.q_hat]
    for row in X[1:]:
        state, verdict = step(state, row, window, est.calibration_, est.config_)
        qs.append(state.q_hat)
        flags.append(verdict.is_static)
    np.testing.assert_array_equal(flags, batch.static)
    np.testing.assert_allclose(np.array(qs), batch.q, atol=1e-12)
    np.testing.assert_allclose(state.b_hat, batch.bias[-1], atol=1e-12)


def test_initial_state_function(fitted):
    s = initial_state(fitted.calibration_, fitted.config_, t0=2.0, bias_init="zero")
    assert s.t == 2.0
    np.testing.assert_array_equal(s.b_hat, 0.0)
    np.testing.assert_array_equal(s.P, fitted.config_.P0)


def test_estimator_protocol():
    est = SMEKF(alpha=3.0, gating="always")
    assert est.get_params()["alpha"] == 3.0
    assert clone(est).get_params() == est.get_params()
    with pytest.raises(NotFittedError):
        est.transform(CAL_STREAM)
    out = est.fit(CAL_STREAM).transform(CAL_STREAM)
    assert out.shape == (len(CAL_STREAM), 4)
    assert est.n_features_in_ == 7
    with pytest.raises(ValueError):
        SMEKF(bias_init="guess").fit(CAL_STREAM).transform(CAL_STREAM)
    with pytest.raises(ValueError):
        SMEKF(gating="sometimes").fit(CAL_STREAM).transform(CAL_STREAM)
    with pytest.raises(ValueError):
        est.transform(CAL_STREAM[:, :6])


def test_diagnostics_are_recorded():
    res = SMEKF(diagnostics=True).fit(CAL_STREAM).filter(CAL_STREAM)
    assert res.min_eig_P.shape == (len(CAL_STREAM),)
    assert np.nanmin(res.min_eig_P) > 0.0
    assert np.nanmax(res.asym_P) == 0.0
    assert SMEKF().fit(CAL_STREAM).filter(CAL_STREAM).min_eig_P is None
