"""Text file formats.

IMU log::

    #imupose-v1,<units>,<rate_hz>,<sensor_id>
    t,wx,wy,wz,ax,ay,az
    0,0.001,...

``units`` is ``rad/s+g`` or ``rad/s+m/s2``; readings in m/s² are divided by
standard gravity on load.  Ground truth::

    t,qw,qx,qy,qz[,px,py,pz]

Config and body-model files are ``key = value`` lines; ``#`` starts a comment.
"""

import csv

import numpy as np

from .errors import BadHeader, DataFormatError, NonMonotoneTimestamps, UnitMismatch
from .imu import STANDARD_GRAVITY
from .kinematics import LINKS, BodyModel

FORMAT_TAG = "#imupose-v1"
# accelerometer divisor into g
UNITS = {"rad/s+g": 1.0, "rad/s+m/s2": STANDARD_GRAVITY}
IMU_COLUMNS = ["t", "wx", "wy", "wz", "ax", "ay", "az"]
TRUTH_COLUMNS = ["t", "qw", "qx", "qy", "qz"]
HAND_COLUMNS = ["px", "py", "pz"]
RATE_TOLERANCE = 0.05
QUAT_NORM_TOLERANCE = 1e-3


def _fmt(x):
    # shortest repr that round-trips exactly
    return repr(float(x))


def _write_rows(fh, rows):
    for r in rows:
        fh.write(",".join(_fmt(v) for v in r))
        fh.write("\n")


def _read_numeric(lines, path, ncol):
    try:
        data = np.array([[float(v) for v in row] for row in csv.reader(lines) if row], dtype=float)
    except ValueError as exc:
        raise DataFormatError(f"{path}: non-numeric value ({exc})") from None
    if data.size == 0:
        return np.empty((0, ncol))
    if data.ndim != 2 or data.shape[1] != ncol:
        raise DataFormatError(f"{path}: expected {ncol} columns per row")
    return data


def _check_monotone(t, path):
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        raise NonMonotoneTimestamps(f"{path}: timestamp at row {bad[0] + 1} does not increase")


def parse_header(line):
    """Split the first line of an IMU log into ``{'units', 'rate_hz', 'sensor_id'}``."""
    parts = line.strip().split(",")
    if len(parts) != 4 or parts[0] != FORMAT_TAG:
        raise BadHeader(f"expected '{FORMAT_TAG},<units>,<rate_hz>,<sensor_id>', got {line.strip()!r}")
    _, units, rate, sensor = parts
    if units not in UNITS:
        raise UnitMismatch(f"unknown units {units!r}; expected one of {sorted(UNITS)}")
    try:
        rate_hz = float(rate)
    except ValueError:
        raise BadHeader(f"sample rate {rate!r} is not a number") from None
    if not rate_hz > 0 or not sensor:
        raise BadHeader("sample rate must be positive and the sensor id non-empty")
    return {"units": units, "rate_hz": rate_hz, "sensor_id": sensor}


def read_imu_log(path):
    """Load an IMU log; returns ``(header dict, (n, 7) array)`` with accel in g."""
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise BadHeader(f"{path}: empty file")
    header = parse_header(lines[0])
    if len(lines) < 2 or [c.strip() for c in lines[1].split(",")] != IMU_COLUMNS:
        raise BadHeader(f"{path}: second line must be {','.join(IMU_COLUMNS)}")
    X = _read_numeric(lines[2:], path, 7)
    _check_monotone(X[:, 0], path)
    if len(X) > 1:
        rate = 1.0 / np.median(np.diff(X[:, 0]))
        if abs(rate - header["rate_hz"]) > RATE_TOLERANCE * header["rate_hz"]:
            raise UnitMismatch(f"{path}: declared {header['rate_hz']} Hz but timestamps give {rate:.3f} Hz")
    X[:, 4:7] /= UNITS[header["units"]]
    if len(X):
        g = np.median(np.linalg.norm(X[:, 4:7], axis=1))
        if not 0.5 < g < 2.0:
            raise UnitMismatch(f"{path}: median accelerometer magnitude {g:.3g} g contradicts units {header['units']}")
    return header, X


def write_imu_log(path, X, rate_hz, sensor_id="imu0", units="rad/s+g"):
    """Write an ``(n, 7)`` stream with accel in g, converted to ``units``."""
    if units not in UNITS:
        raise UnitMismatch(f"unknown units {units!r}")
    X = np.array(X, dtype=float)
    X[:, 4:7] *= UNITS[units]
    with open(path, "w", newline="") as fh:
        fh.write(f"{FORMAT_TAG},{units},{_fmt(float(rate_hz))},{sensor_id}\n")
        fh.write(",".join(IMU_COLUMNS) + "\n")
        _write_rows(fh, X)


def read_truth(path):
    """Load a ground-truth file; returns ``(t, q, positions or None)``."""
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise BadHeader(f"{path}: empty file")
    cols = [c.strip() for c in lines[0].split(",")]
    if cols not in (TRUTH_COLUMNS, TRUTH_COLUMNS + HAND_COLUMNS):
        raise BadHeader(f"{path}: header must be {','.join(TRUTH_COLUMNS)}[,px,py,pz]")
    data = _read_numeric(lines[1:], path, len(cols))
    _check_monotone(data[:, 0], path)
    q = data[:, 1:5]
    if np.any(np.abs(np.linalg.norm(q, axis=1) - 1.0) > QUAT_NORM_TOLERANCE):
        raise DataFormatError(f"{path}: quaternions are not unit length")
    q = q / np.linalg.norm(q, axis=1, keepdims=True)
    return data[:, 0], q, (data[:, 5:8] if len(cols) == 8 else None)


def write_truth(path, t, q, positions=None):
    cols = TRUTH_COLUMNS + (HAND_COLUMNS if positions is not None else [])
    parts = [np.asarray(t, float)[:, None], np.asarray(q, float)]
    if positions is not None:
        parts.append(np.asarray(positions, float))
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        _write_rows(fh, np.hstack(parts))


def write_quaternions(path, t, q):
    """Filter output; same layout as a ground-truth file without positions."""
    write_truth(path, t, q)


# -- key/value files ------------------------------------------------------------

def _coerce(text):
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


def parse_config(text):
    """``key = value`` lines into a dict with ints, floats and booleans coerced."""
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataFormatError(f"config line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise DataFormatError(f"config line {n}: empty key")
        out[key] = _coerce(value)
    return out


def read_config(path):
    with open(path) as fh:
        return parse_config(fh.read())


def format_config(cfg):
    return "".join(f"{k} = {v}\n" for k, v in sorted(cfg.items()))


def write_body_model(path, model):
    with open(path, "w") as fh:
        for k in LINKS:
            fh.write(f"{k} = {_fmt(model.lengths[k])}\n")


def read_body_model(path):
    cfg = read_config(path)
    missing = [k for k in LINKS if k not in cfg]
    if missing:
        raise DataFormatError(f"{path}: missing lengths {missing}")
    return BodyModel(lengths={k: float(cfg[k]) for k in LINKS})
