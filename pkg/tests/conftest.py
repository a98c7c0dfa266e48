import numpy as np
import pytest

from nmflab.dataset import load_named

_ACCEPTANCE = []


@pytest.fixture(scope="session")
def orthodont_raw():
    """Orthodont distances (27 x 4, unscaled) and sex labels."""
    return load_named("orthodont", scale=False)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def criterion_report():
    """Record ``(name, passed, detail)`` for the end-of-run summary."""
    def record(name, passed, detail):
        _ACCEPTANCE.append((name, bool(passed), detail))
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in _ACCEPTANCE:
        terminalreporter.line(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
