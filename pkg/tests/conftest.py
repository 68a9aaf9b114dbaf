import numpy as np
import pytest

from multiconf.core import Dataset

ACCEPTANCE_RESULTS = []


def record_criterion(name: str, passed: bool, detail: str = ""):
    ACCEPTANCE_RESULTS.append((name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")


def random_dataset(rng, n=10, p=3, q=2, noise=1.0):
    x = rng.standard_normal((n, p))
    beta = rng.standard_normal((p, q))
    y = x @ beta + noise * rng.standard_normal((n, q))
    return Dataset(x, y)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
