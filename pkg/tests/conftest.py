import numpy as np
import pytest
from hypothesis import settings

from rbg.baseline import Exponential, Uniform, Weibull

settings.register_profile("rbg", deadline=None, max_examples=60)
settings.load_profile("rbg")

BASELINES = {
    "uniform": Uniform(),
    "exponential": Exponential(1.0),
    "weibull": Weibull(1.5, 1.0),
}


@pytest.fixture(params=sorted(BASELINES))
def baseline(request):
    return BASELINES[request.param]


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
