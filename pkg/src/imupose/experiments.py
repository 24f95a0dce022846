"""End-to-end experiments on simulated or recorded data.

Three kinds are supported:

``drift``
    Still / shake / still.  Reports attitude errors and the mean heading
    error over the final still phase.
``dynamic``
    Mostly continuous motion.  Reports attitude errors.
``track``
    Five-sensor upper body.  A hands-together session calibrates the arm
    lengths, then the right hand draws circles; reports palm position
    errors (and right-forearm attitude errors).
"""

import numpy as np

from . import kinematics as kin
from . import sim
from .baselines import GDC, NCF
from .errors import ConfigError, ImuPoseError
from .metrics import ErrorReport, attitude_errors, evaluate_attitude, heading_drift, position_errors_mm
from .smekf import SMEKF

KINDS = ("drift", "dynamic", "track")
ALGORITHMS = ("smekf", "ncf", "gdc", "gyro", "truth")

DEFAULTS = {
    "alpha": 2.0,
    "beta": 2.0,
    "gamma1": 0.01,
    "gamma2": 0.01,
    "window_n": 0,
    "sigma_b": 1e-10,
    "p0_angle": 0.1,
    "p0_bias": 0.01,
    "p0_heading": 0.0,
    "kp": 1.0,
    "ki": 0.3,
    "beta_gain": 0.1,
    "calib_seconds": 2.5,
    "align_window": 1.0,
    "gyro_density": 0.007,
    "accel_density": 120e-6,
    "noise": True,
    "bias_scale": 0.01,
    "drift_bias": 0.02,
    "length_spread": 0.05,
    "prior_tolerance": 0.2,
    "calibrate_lengths": True,
    "use_true_lengths": False,
}
KIND_DEFAULTS = {
    "drift": {"rate": 1000.0, "bias_init": "zero"},
    "dynamic": {"rate": 100.0, "bias_init": "calibrated"},
    "track": {"rate": 100.0, "bias_init": "calibrated"},
}


def resolve_config(kind, config=None, rate=None):
    if kind not in KINDS:
        raise ValueError(f"unknown experiment kind {kind!r}")
    cfg = dict(DEFAULTS)
    cfg.update(KIND_DEFAULTS[kind])
    cfg.update(config or {})
    if rate is not None:
        cfg["rate"] = float(rate)
    unknown = set(cfg) - set(DEFAULTS) - {"rate", "bias_init"} - {f"prior_{k}" for k in kin.LINKS}
    unknown -= {f"length_{k}" for k in kin.LINKS}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return cfg


def make_filter(algorithm, cfg):
    """Unfitted estimator for ``algorithm`` configured from ``cfg``."""
    bias_init = cfg.get("bias_init", "calibrated")
    if algorithm in ("smekf", "gyro"):
        return SMEKF(
            alpha=cfg["alpha"],
            beta=cfg["beta"],
            gamma1=cfg["gamma1"],
            gamma2=cfg["gamma2"],
            window_n=int(cfg["window_n"]) or None,
            sigma_b=cfg["sigma_b"],
            p0_angle=cfg["p0_angle"],
            p0_bias=cfg["p0_bias"],
            p0_heading=cfg["p0_heading"],
            bias_init=bias_init,
            gating="never" if algorithm == "gyro" else "detector",
        )
    if algorithm == "ncf":
        return NCF(kp=cfg["kp"], ki=cfg["ki"], bias_init=bias_init)
    if algorithm == "gdc":
        return GDC(beta=cfg["beta_gain"], bias_init=bias_init)
    raise ValueError(f"unknown algorithm {algorithm!r}; expected one of {ALGORITHMS[:4]}")


def noise_for(cfg, rate):
    if not cfg["noise"]:
        return None
    return sim.NoiseParams.from_density(
        rate,
        gyro_density=np.deg2rad(cfg["gyro_density"]),
        accel_density=cfg["accel_density"],
        sigma_b=np.eye(3) * cfg["sigma_b"],
    )


def calibration_slice(X, seconds):
    return X[X[:, 0] <= X[0, 0] + seconds]


def run_filter(algorithm, X, cfg):
    """Fit on the leading still segment and filter the whole stream."""
    est = make_filter(algorithm, cfg).fit(calibration_slice(X, cfg["calib_seconds"]))
    return est.filter(X)


def _single_sensor(kind, algorithm, cfg, seed, inputs):
    if inputs is not None:
        X, t_truth, q_truth = inputs
        spec = None
    else:
        rate = cfg["rate"]
        spec = sim.drift_spec(rate, seed) if kind == "drift" else sim.dynamic_spec(rate, seed)
        rng = np.random.default_rng([seed, 5])
        bias = np.full(3, cfg["drift_bias"]) if kind == "drift" else sim.random_bias(rng, cfg["bias_scale"])
        truth, X = sim.generate(spec, noise_for(cfg, rate), bias, seed=seed)
        t_truth, q_truth = truth.t, truth.q
    if algorithm == "truth":
        t_est, q_est = t_truth, q_truth
    else:
        res = run_filter(algorithm, X, cfg)
        t_est, q_est = res.t, res.q
    report = evaluate_attitude(t_est, q_est, t_truth, q_truth, cfg["align_window"], algorithm)
    if kind == "drift":
        last = spec.phases[-1].duration if spec is not None else 0.4 * (t_truth[-1] - t_truth[0])
        report.drift_deg = heading_drift(report, t_truth[-1] - last)
    return report


# -- tracking -------------------------------------------------------------------

def true_body_model(cfg, seed):
    """Simulated subject: nominal arm lengths perturbed by up to ``length_spread``."""
    rng = np.random.default_rng([seed, 6])
    lengths = dict(kin.NOMINAL_LENGTHS)
    spread = cfg["length_spread"]
    for k in kin.ARM_LINKS:
        lengths[k] = kin.NOMINAL_LENGTHS[k] * (1.0 + rng.uniform(-spread, spread))
    lengths.update({k: float(cfg[f"length_{k}"]) for k in kin.LINKS if f"length_{k}" in cfg})
    return kin.BodyModel(lengths=lengths)


def _priors(cfg):
    lengths = {k: float(cfg.get(f"prior_{k}", kin.NOMINAL_LENGTHS[k])) for k in kin.LINKS}
    return kin.AnthropometricPriors(lengths=lengths, tolerance=cfg["prior_tolerance"])


def sensor_biases(cfg, seed, session):
    rng = np.random.default_rng([seed, 7, session])
    return {s: sim.random_bias(rng, cfg["bias_scale"]) for s in kin.SEGMENTS}


def estimate_body(algorithm, rec, cfg):
    """Per-segment attitude estimates (segment -> (n, 4)) for a simulated session."""
    if algorithm == "truth":
        return {s: rec.truth[s].q for s in kin.SEGMENTS}
    return {s: run_filter(algorithm, rec.streams[s], cfg).q for s in kin.SEGMENTS}


def _start_slice(t, cfg):
    return t <= t[0] + cfg["calib_seconds"]


def calibrate_session(algorithm, cfg, seed, true_model):
    """Simulated hands-together session -> calibrated :class:`BodyModel`."""
    motion = sim.ClosedChainMotion(true_model, sample_rate=cfg["rate"], seed=seed)
    rec = sim.generate_body(
        true_model, motion.specs(), noise_for(cfg, cfg["rate"]), sensor_biases(cfg, seed, 0), seed=seed
    )
    est = estimate_body(algorithm, rec, cfg)
    start = _start_slice(rec.t, cfg)
    tracker = kin.UpperBodyTracker(start_posture="tpose").fit({s: est[s][start] for s in kin.SEGMENTS})
    aligned = tracker.aligned_attitudes(est)
    t0, t1 = motion.chain_interval
    sel = (rec.t >= t0 + 0.5) & (rec.t <= t1)
    prior_model = kin.BodyModel(lengths={**_priors(cfg).lengths, "shoulder": true_model.lengths["shoulder"]})
    return kin.calibrate_link_lengths(prior_model, _priors(cfg), {s: aligned[s][sel] for s in kin.SEGMENTS})


def _track(algorithm, cfg, seed):
    true_model = true_body_model(cfg, seed)
    if cfg["use_true_lengths"]:
        model = true_model
    elif cfg["calibrate_lengths"]:
        model = calibrate_session(algorithm, cfg, seed, true_model)
    else:
        model = kin.BodyModel(lengths={**_priors(cfg).lengths, "shoulder": true_model.lengths["shoulder"]})
    specs, posture = sim.circles_specs(cfg["rate"], seed=seed)
    rec = sim.generate_body(true_model, specs, noise_for(cfg, cfg["rate"]), sensor_biases(cfg, seed, 1), seed=seed + 1)
    est = estimate_body(algorithm, rec, cfg)
    start = _start_slice(rec.t, cfg)
    tracker = kin.UpperBodyTracker(model=model, start_posture=posture)
    tracker.fit({s: est[s][start] for s in kin.SEGMENTS})
    hands = tracker.transform(est)
    err_mm = position_errors_mm(hands[:, 3:], rec.hands["hand_right"])
    aligned = tracker.aligned_attitudes(est)["forearm_right"]
    report = ErrorReport(
        algorithm=algorithm,
        t=rec.t,
        errors_deg=attitude_errors(rec.truth["forearm_right"].q, aligned),
        hand_t=rec.t,
        hand_error_mm=err_mm,
    )
    for k in kin.ARM_LINKS:
        report.extra[f"{k}_m"] = float(model.lengths[k])
        report.extra[f"{k}_true_m"] = float(true_model.lengths[k])
    return report


def run_experiment(kind, algorithm, config=None, seed=0, rate=None, inputs=None, out=None):
    """Run one experiment and optionally write its report files.

    ``inputs`` is ``None`` to simulate, or ``(stream, t_truth, q_truth)`` for
    a recorded single-sensor drift/dynamic run.  ``out`` is a path prefix for
    :meth:`ErrorReport.write`.
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    cfg = resolve_config(kind, config, rate)
    if kind == "track":
        if inputs is not None:
            raise ImuPoseError("track experiments run on simulated sessions only; use the 'track' command for logs")
        report = _track(algorithm, cfg, seed)
    else:
        report = _single_sensor(kind, algorithm, cfg, seed, inputs)
    report.extra.update({"kind": kind, "seed": seed, "rate_hz": cfg["rate"]})
    if out is not None:
        report.write(out)
    return report


def benchmark(kind, algorithms, seeds, config=None, rate=None):
    """``{algorithm: [ErrorReport per seed]}`` on a shared seed set."""
    return {a: [run_experiment(kind, a, config, s, rate) for s in seeds] for a in algorithms}


def mean_errors(reports):
    """Across-seed average of the per-axis mean absolute errors (deg)."""
    return np.mean([r.mean_deg for r in reports], axis=0)
