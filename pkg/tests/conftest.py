import numpy as np
import pytest

from sgbh import _hot

BACKENDS = ["numpy"] + (["numba"] if _hot._step_jit is not None else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20261017)


ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line; ``check(n, ok, detail)`` then asserts ``ok``."""
    lines = request.config.stash.setdefault(ACCEPTANCE, {})

    def check(n, ok, detail, case=""):
        ok = bool(ok)
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines[(n, case)] = line
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
