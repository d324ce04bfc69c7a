import sys
from datetime import date

import numpy as np
import pytest
from hypothesis import settings

from jkge.series import PairedSeries

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def make_pair(obs, sim, start=date(2003, 10, 1)):
    return PairedSeries.from_arrays(np.asarray(obs, float), np.asarray(sim, float), start)


def random_pair(rng, n, positive=True):
    """Seasonal-looking positive obs and a correlated, imperfect sim."""
    t = np.arange(n)
    base = 2.0 + np.sin(2 * np.pi * t / 60.0)
    o = base * rng.lognormal(0.0, 0.4, n)
    s = 0.8 * base * rng.lognormal(0.1, 0.5, n) + 0.1
    if not positive:
        o, s = o - 2.0, s - 2.0
    return make_pair(o, s)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(acceptance.RESULTS, key=lambda s: int(s.split()[1][1:])):
        terminalreporter.write_line(line)
