import datetime as dt

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from argojoint.config import RunConfig
from argojoint.synthetic import SyntheticScenario, generate_synthetic

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

EPOCH = dt.date(2020, 3, 7)  # first Saturday of the synthetic calendar


def week(k: int) -> dt.date:
    """Saturday ending synthetic week ``k`` (0-based)."""
    return EPOCH + dt.timedelta(days=7 * k)


@pytest.fixture(scope="session")
def small_bundle():
    return generate_synthetic(SyntheticScenario(n_states=4, weeks=100, seed=3))


@pytest.fixture(scope="session")
def small_cfg():
    return RunConfig(imputation_draws=2, horizons=(1,), targets=("cases",))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


class _Criterion:
    def __init__(self, sink, number, title):
        self.sink, self.number, self.title = sink, number, title
        self.checks = []

    def check(self, ok, detail):
        self.checks.append((bool(ok), detail))
        return ok

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        ok = exc_type is None and all(c for c, _ in self.checks)
        details = "; ".join(d for _, d in self.checks)
        if exc_type is not None:
            details = f"{details}; raised {exc_type.__name__}: {exc}".lstrip("; ")
        line = f"CRITERION {self.number}: {'PASS' if ok else 'FAIL'} {self.title} [{details}]"
        self.sink.append(line)
        print(line)
        if exc_type is None and not ok:
            raise AssertionError("; ".join(d for c, d in self.checks if not c))
        return False


@pytest.fixture
def criterion(pytestconfig):
    """``with criterion(n, title) as c: c.check(ok, detail)`` records one PASS/FAIL line."""
    return lambda number, title: _Criterion(pytestconfig.stash[ACCEPTANCE], number, title)
