import numpy as np
import pytest

from blindofdm.sysmodel import SystemConfig


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def simo_cfg():
    return SystemConfig(1, 2, 8, 2, 2, smoothing=2)


@pytest.fixture
def mimo_cfg():
    return SystemConfig(2, 4, 8, 2, 2, smoothing=2)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def random_configs(rng, n, max_ant=4, max_K=16, max_J=3):
    """Valid configurations with Mt <= Mr <= max_ant, K <= max_K, J <= max_J."""
    out = []
    while len(out) < n:
        Mr = int(rng.integers(1, max_ant + 1))
        Mt = int(rng.integers(1, Mr + 1))
        K = int(rng.integers(2, max_K + 1))
        P = int(rng.integers(1, K + 1))
        L = int(rng.integers(1, P + 1))
        J = int(rng.integers(1, max_J + 1))
        try:
            out.append(SystemConfig(Mt, Mr, K, P, L, smoothing=J))
        except ValueError:
            continue
    return out


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        status, name, secs, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{status}] criterion {n}: {name} ({secs:.1f} s) {detail}")
