import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "imupose",
    deadline=None,
    max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("imupose")


def make_stream(n, rate=100.0, gyro=(0.0, 0.0, 0.0), accel=(0.0, 0.0, 1.0), gyro_std=0.0, accel_std=0.0, seed=0, t0=0.0):
    """Still-sensor stream with optional white noise."""
    rng = np.random.default_rng(seed)
    X = np.empty((n, 7))
    X[:, 0] = t0 + np.arange(n) / rate
    X[:, 1:4] = np.asarray(gyro, float) + gyro_std * rng.standard_normal((n, 3))
    X[:, 4:7] = np.asarray(accel, float) + accel_std * rng.standard_normal((n, 3))
    return X


def random_quats(rng, n):
    q = rng.standard_normal((n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = []


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(number, passed, detail)``."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        _CRITERIA.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.write_sep("=", "acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
