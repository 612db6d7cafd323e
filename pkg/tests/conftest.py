import numpy as np
import pytest

from rsgnet.data import DataMoments, synthesize_dataset


def central_diff(f, W, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at ``W``."""
    W = np.array(W, dtype=np.float64)
    g = np.zeros_like(W)
    it = np.nditer(W, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = W[i]
        W[i] = old + h
        fp = f(W)
        W[i] = old - h
        fm = f(W)
        W[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b)) / scale)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_supervised():
    return synthesize_dataset(5, 2, 64, DataMoments(0.5, 0.3), np.random.default_rng(7))


@pytest.fixture(scope="session")
def small_unsupervised():
    return synthesize_dataset(6, 0, 64, DataMoments(0.5, 0.3), np.random.default_rng(8))


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance verdict line, then assert it."""
    def check(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} ({detail})"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line
    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
