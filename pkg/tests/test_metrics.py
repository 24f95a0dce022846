import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from imupose import quat, sim
from imupose.errors import AlignmentNotStatic, NoOverlap
from imupose.experiments import run_filter, resolve_config
from imupose.metrics import (
    ErrorReport,
    attitude_errors,
    common_samples,
    evaluate_attitude,
    heading_drift,
    match_nearest,
    position_errors_mm,
)


@pytest.fixture(scope="module")
def dynamic_run():
    cfg = resolve_config("dynamic")
    truth, X = sim.generate(sim.dynamic_spec(100.0, seed=7), sim.default_noise(100.0), bias=[0.01, -0.01, 0.0], seed=7)
    return truth, run_filter("smekf", X, cfg)


def test_identical_estimates_give_zero_errors(dynamic_run):
    truth, _ = dynamic_run
    r = evaluate_attitude(truth.t, truth.q, truth.t, truth.q)
    np.testing.assert_allclose(r.mean_deg, 0.0, atol=1e-6)
    np.testing.assert_allclose(r.std_deg, 0.0, atol=1e-6)


def test_constant_offset_is_aligned_away(dynamic_run):
    truth, _ = dynamic_run
    g = quat.from_euler_zyx(0.3, -0.2, 2.5)
    est = quat.quat_mul_many(np.tile(g, (len(truth.q), 1)), truth.q)
    r = evaluate_attitude(truth.t, est, truth.t, truth.q)
    assert r.errors_deg.max() < 1e-6


def _reference_errors(t_truth, q_truth, q_est, window):
    # independent implementation with scipy rotations
    to_r = lambda q: Rotation.from_quat(np.roll(q, -1, axis=1))
    Rt, Re = to_r(q_truth), to_r(q_est)
    sel = t_truth <= t_truth[0] + window
    align = (Rt[sel] * Re[sel].inv()).mean()
    err = Rt.inv() * align * Re
    return np.abs(np.degrees(err.as_euler("ZYX")[:, ::-1]))


def test_metric_matches_reference_implementation(dynamic_run):
    truth, res = dynamic_run
    r = evaluate_attitude(res.t, res.q, truth.t, truth.q, 1.0, "smekf")
    ref = _reference_errors(truth.t, truth.q, res.q, 1.0)
    np.testing.assert_allclose(r.mean_deg, ref.mean(axis=0), atol=1e-9)
    np.testing.assert_allclose(r.std_deg, ref.std(axis=0), atol=1e-9)


def test_alignment_window_must_be_still(dynamic_run):
    truth, _ = dynamic_run
    spin = quat.exp_rotation_many(np.outer(truth.t, [0.0, 0.0, 0.5]))
    est = quat.quat_mul_many(spin, truth.q)
    with pytest.raises(AlignmentNotStatic):
        evaluate_attitude(truth.t, est, truth.t, truth.q, align_window=10.0)


def test_matching():
    t_truth = np.arange(10) * 0.01
    t_est = t_truth[2:] + 0.004
    i, j = common_samples(t_truth, t_est)
    np.testing.assert_array_equal(i, np.arange(2, 10))
    np.testing.assert_array_equal(j, np.arange(8))
    j, ok = match_nearest([0.0, 0.5], [0.0, 0.1], 0.01)
    np.testing.assert_array_equal(ok, [True, False])
    with pytest.raises(NoOverlap) as exc:
        common_samples(t_truth, t_truth + 5.0)
    assert exc.value.exit_code == 6


def test_report_fields_and_files(tmp_path):
    t = np.arange(5) * 0.1
    err = np.array([[1.0, 2.0, 3.0]] * 5)
    r = ErrorReport("x", t, err, hand_t=t, hand_error_mm=np.array([1.0, 2.0, 3.0, 4.0, 5.0]), extra={"seed": 3})
    r.drift_deg = heading_drift(r, 0.25)
    assert r.drift_deg == 3.0
    s = r.summary()
    assert s["roll_mean_deg"] == 1.0 and s["yaw_std_deg"] == 0.0 and s["hand_mean_mm"] == 3.0 and s["seed"] == 3
    paths = r.write(str(tmp_path / "rep"))
    assert [p.rsplit("_", 1)[1] for p in paths] == ["summary.csv", "series.csv", "hand.csv"]
    lines = (tmp_path / "rep_summary.csv").read_text().splitlines()
    assert lines[0].startswith("algorithm,samples,roll_mean_deg") and lines[1].startswith("x,5,1,")
    assert (tmp_path / "rep_series.csv").read_text().splitlines()[1] == "0,1,2,3"
    assert np.isnan(heading_drift(r, 10.0))
    bare = ErrorReport("y", t, err)
    assert len(bare.write(str(tmp_path / "bare"))) == 2
    assert np.isnan(bare.hand_mean_mm)


def test_attitude_and_position_errors():
    q = quat.from_euler_zyx(0.0, 0.0, np.radians(5.0))
    np.testing.assert_allclose(attitude_errors(quat.identity(), q), [[0.0, 0.0, 5.0]], atol=1e-12)
    np.testing.assert_allclose(position_errors_mm([[0.0, 0.0, 0.0]], [[0.003, 0.004, 0.0]]), [5.0])
