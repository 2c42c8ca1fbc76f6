import numpy as np
import pytest

from tailtrend.core import BivariateSample

ACCEPTANCE_LINES: list[str] = []


def brute_force_local(x, y, k, h, u, v):
    """Literal double loop: count window points strictly above both order-statistic thresholds."""
    nh = len(x)
    kh = float(k * h)
    ku = int(np.floor(kh * u + 1e-9))
    kv = int(np.floor(kh * v + 1e-9))
    xs = sorted(x)
    ys = sorted(y)
    thr_x = xs[nh - ku - 1]  # (nh - ku)-th ascending order statistic
    thr_y = ys[nh - kv - 1]
    count = 0
    for i in range(nh):
        if x[i] > thr_x and y[i] > thr_y:
            count += 1
    return count / kh


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_sample(seed, n, rho=0.6):
    g = np.random.default_rng(seed)
    z = g.standard_normal((n, 2))
    z[:, 1] = rho * z[:, 0] + np.sqrt(1 - rho**2) * z[:, 1]
    return BivariateSample(z[:, 0], z[:, 1])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
