import functools

import pytest

from cctpca.dynamics import CASES, critical_clearing_time
from cctpca.netmodel import ieee14, nominal_parameters
from cctpca.pipeline import rank_scenario

THRESHOLDS = {"I": 0.975, "II": 0.95, "III": 0.99}


@pytest.fixture(scope="session")
def system14():
    return ieee14()


@pytest.fixture(scope="session")
def lam14(system14):
    return nominal_parameters(system14)


@functools.lru_cache(maxsize=None)
def _cct(case):
    s = ieee14()
    return critical_clearing_time(s, nominal_parameters(s), CASES[case])


@functools.lru_cache(maxsize=None)
def _ranking(case):
    s = ieee14()
    return rank_scenario(s, nominal_parameters(s), CASES[case], THRESHOLDS[case])


@pytest.fixture(scope="session")
def cct14():
    """Nominal clearing-time results, computed once per case."""
    return _cct


@pytest.fixture(scope="session")
def ranking14():
    """Nominal ranking results, computed once per case."""
    return _ranking



# -- acceptance summary -------------------------------------------------------------

ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record the verdict of one acceptance criterion under the test's label."""
    label = request.node.get_closest_marker("criterion").args[0]

    def record(passed, detail=""):
        ACCEPTANCE[label] = (bool(passed), detail)
        return passed

    yield record
    ACCEPTANCE.setdefault(label, (False, "did not complete"))


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, (passed, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {label}" + (f"  [{detail}]" if detail else ""))
