"""Command-line interface.

Exit codes:

==  ===========================================
0   success
1   other failure
2   bad command line
3   malformed or inconsistent input file
4   sensor calibration failed
5   filter failed
6   evaluation failed
7   body kinematics failed
8   simulation spec invalid
==  ===========================================
"""

import argparse
import os
import sys
import warnings

import numpy as np

from . import experiments as ex
from . import io as fio
from . import kinematics as kin
from . import sim
from .errors import ImuPoseError
from .imu import calibrate_stationary
from .metrics import common_samples, evaluate_attitude, heading_drift, position_errors_mm


def _cfg(args, kind="dynamic"):
    return ex.resolve_config(kind, args.config_values, args.rate)


def cmd_calibrate(args):
    _, X = fio.read_imu_log(args.log)
    cfg = _cfg(args)
    calib = calibrate_stationary(ex.calibration_slice(X, cfg["calib_seconds"]) if args.head else X)
    out = {
        "rate_hz": f"{calib.rate_hz:.9g}",
        "samples": calib.sample_count,
        "bias": " ".join(f"{v:.9g}" for v in calib.bias0),
        "q0": " ".join(f"{v:.9g}" for v in calib.q0),
        "sigma_omega_diag": " ".join(f"{v:.9g}" for v in np.diag(calib.sigma_omega_hat)),
        "sigma_g_diag": " ".join(f"{v:.9g}" for v in np.diag(calib.sigma_g_hat)),
    }
    text = "".join(f"{k} = {v}\n" for k, v in out.items())
    _emit(text, args.output)


def _emit(text, path):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_simulate(args):
    cfg = _cfg(args, "track" if args.preset in ("circles", "hands") else args.preset)
    rate = cfg["rate"]
    os.makedirs(args.out, exist_ok=True)
    noise = ex.noise_for(cfg, rate)
    if args.preset in ("drift", "dynamic"):
        spec = sim.drift_spec(rate, args.seed) if args.preset == "drift" else sim.dynamic_spec(rate, args.seed)
        rng = np.random.default_rng([args.seed, 5])
        bias = np.full(3, cfg["drift_bias"]) if args.preset == "drift" else sim.random_bias(rng, cfg["bias_scale"])
        truth, X = sim.generate(spec, noise, bias, seed=args.seed)
        fio.write_imu_log(os.path.join(args.out, "imu.csv"), X, rate, "imu0", args.units)
        fio.write_truth(os.path.join(args.out, "truth.csv"), truth.t, truth.q)
        return
    model = ex.true_body_model(cfg, args.seed)
    if args.preset == "circles":
        specs, _ = sim.circles_specs(rate, seed=args.seed)
    else:
        specs = sim.ClosedChainMotion(model, sample_rate=rate, seed=args.seed).specs()
    rec = sim.generate_body(model, specs, noise, ex.sensor_biases(cfg, args.seed, 1), seed=args.seed)
    for seg in kin.SEGMENTS:
        fio.write_imu_log(os.path.join(args.out, f"{seg}.csv"), rec.streams[seg], rate, seg, args.units)
        fio.write_truth(os.path.join(args.out, f"truth_{seg}.csv"), rec.t, rec.truth[seg].q)
    fio.write_truth(
        os.path.join(args.out, "truth_hand_right.csv"), rec.t, rec.truth["forearm_right"].q, rec.hands["hand_right"]
    )
    fio.write_body_model(os.path.join(args.out, "body.txt"), model)


def cmd_filter(args):
    _, X = fio.read_imu_log(args.log)
    cfg = _cfg(args)
    res = ex.run_filter(args.algorithm, X, cfg)
    fio.write_quaternions(args.output, res.t, res.q)


def _session(directory, algorithm, cfg):
    streams = {}
    for seg in kin.SEGMENTS:
        streams[seg] = fio.read_imu_log(os.path.join(directory, f"{seg}.csv"))[1]
    n = min(len(X) for X in streams.values())
    t = streams["chest"][:n, 0]
    est = {seg: ex.run_filter(algorithm, X[:n], cfg).q for seg, X in streams.items()}
    return t, est


def cmd_track(args):
    cfg = _cfg(args, "track")
    model = fio.read_body_model(args.model) if args.model else kin.BodyModel()
    if args.calibrate:
        t, est = _session(args.calibrate, args.algorithm, cfg)
        start = t <= t[0] + cfg["calib_seconds"]
        tracker = kin.UpperBodyTracker(start_posture=args.calibration_posture)
        tracker.fit({s: est[s][start] for s in kin.SEGMENTS})
        aligned = tracker.aligned_attitudes(est)
        t0, t1 = args.chain_window
        sel = (t >= t0) & (t <= t1)
        priors = kin.AnthropometricPriors(lengths=dict(model.lengths), tolerance=cfg["prior_tolerance"])
        model = kin.calibrate_link_lengths(model, priors, {s: aligned[s][sel] for s in kin.SEGMENTS})
        if args.model_out:
            fio.write_body_model(args.model_out, model)
    t, est = _session(args.session, args.algorithm, cfg)
    start = t <= t[0] + cfg["calib_seconds"]
    tracker = kin.UpperBodyTracker(model=model, start_posture=args.posture)
    tracker.fit({s: est[s][start] for s in kin.SEGMENTS})
    hands = tracker.transform(est)
    q = tracker.aligned_attitudes(est)["forearm_right"]
    fio.write_truth(args.output, t, q, hands[:, 3:])


def cmd_evaluate(args):
    t_est, q_est, p_est = fio.read_truth(args.estimate)
    t_tru, q_tru, p_tru = fio.read_truth(args.truth)
    report = evaluate_attitude(t_est, q_est, t_tru, q_tru, args.align_window, args.label)
    if p_est is not None and p_tru is not None:
        i_t, i_e = common_samples(t_tru, t_est)
        report.hand_t = t_tru[i_t]
        report.hand_error_mm = position_errors_mm(p_est[i_e], p_tru[i_t])
    if args.drift_from is not None:
        report.drift_deg = heading_drift(report, args.drift_from)
    paths = report.write(args.output)
    sys.stdout.write(report.summary_csv())
    return paths


def cmd_experiment(args):
    report = ex.run_experiment(args.kind, args.algorithm, args.config_values, args.seed, args.rate, out=args.output)
    sys.stdout.write(report.summary_csv())


def build_parser():
    p = argparse.ArgumentParser(prog="imupose", description="IMU attitude estimation and upper-body tracking")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--rate", type=float, choices=(100.0, 1000.0), help="sample rate (Hz)")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", help="noise, bias and initial attitude from a still recording")
    c.add_argument("log")
    c.add_argument("-o", "--output")
    c.add_argument("--head", action="store_true", help="use only the leading calib_seconds of the log")
    c.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("simulate", help="write synthetic IMU logs and ground truth")
    s.add_argument("preset", choices=("drift", "dynamic", "circles", "hands"))
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--units", choices=sorted(fio.UNITS), default="rad/s+g")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("filter", help="estimate attitude from an IMU log")
    f.add_argument("log")
    f.add_argument("-a", "--algorithm", choices=ex.ALGORITHMS[:4], default="smekf")
    f.add_argument("-o", "--output", required=True)
    f.set_defaults(func=cmd_filter)

    t = sub.add_parser("track", help="palm positions from five segment logs (<dir>/<segment>.csv)")
    t.add_argument("session")
    t.add_argument("-a", "--algorithm", choices=ex.ALGORITHMS[:4], default="smekf")
    t.add_argument("--model", help="body model file (default: nominal lengths)")
    t.add_argument("--posture", default="table", help="start posture of the session")
    t.add_argument("--calibrate", metavar="DIR", help="hands-together session used to refine arm lengths")
    t.add_argument("--calibration-posture", default="tpose")
    t.add_argument("--chain-window", nargs=2, type=float, default=(6.5, 26.0), metavar=("T0", "T1"))
    t.add_argument("--model-out")
    t.add_argument("-o", "--output", required=True)
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("evaluate", help="compare an estimate file against ground truth")
    e.add_argument("estimate")
    e.add_argument("truth")
    e.add_argument("--align-window", type=float, default=1.0)
    e.add_argument("--drift-from", type=float, help="report mean heading error after this time (s)")
    e.add_argument("--label", default="")
    e.add_argument("-o", "--output", required=True, help="report path prefix")
    e.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("experiment", help="simulate, filter and evaluate one preset")
    x.add_argument("kind", choices=ex.KINDS)
    x.add_argument("-a", "--algorithm", choices=ex.ALGORITHMS, default="smekf")
    x.add_argument("-o", "--output", required=True, help="report path prefix")
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.config_values = fio.read_config(args.config) if args.config else {}
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            args.func(args)
    except ImuPoseError as exc:
        print(f"imupose: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"imupose: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
