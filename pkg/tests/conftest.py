import numpy as np
import pytest

from bnpsurv.data_model import Dataset


def assert_mean_within(samples, expected, k=3.0):
    """Sample mean within ``k`` Monte-Carlo standard errors of ``expected``."""
    samples = np.asarray(samples, dtype=float)
    se = samples.std(ddof=1) / np.sqrt(samples.size)
    assert abs(samples.mean() - expected) <= k * se, (samples.mean(), expected, se)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_data():
    # 100 observations in 4 groups, mixed censoring
    r = np.random.default_rng(5)
    t = np.exp(r.normal(0.3, 0.8, 100))
    c = r.exponential(3.0, 100)
    return Dataset(np.minimum(t, c), t <= c, np.repeat(np.arange(4), 25))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results):
        terminalreporter.write_line(results[key])
