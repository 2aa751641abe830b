import numpy as np
import pytest

ACCEPTANCE = []


def record_acceptance(name, passed, detail=""):
    ACCEPTANCE.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE:
        terminalreporter.write_line(
            f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, n, shift=0.1):
    a = rng.standard_normal((n, n + 2))
    return a @ a.T + shift * np.eye(n)


def random_psd(rng, n, rank):
    a = rng.standard_normal((n, rank))
    return a @ a.T
