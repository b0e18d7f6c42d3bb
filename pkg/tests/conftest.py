import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dmcl import experiments as ex

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def example1_cfg():
    return ex.load_config("example1")


@pytest.fixture(scope="session")
def estimation_cfg():
    return ex.load_config("estimation")


@pytest.fixture(scope="session")
def cycle_problem(estimation_cfg):
    """Five-agent directed cycle with the calibrated identification data."""
    return ex.build_problem(estimation_cfg)


@pytest.fixture(scope="session")
def cycle_cert(cycle_problem):
    return ex.certificate_for(cycle_problem)


@pytest.fixture(scope="session")
def example1_problem(example1_cfg):
    return ex.build_problem(example1_cfg)


@pytest.fixture(scope="session")
def example1_cert(example1_problem):
    return ex.certificate_for(example1_problem)


# ---------------------------------------------------------------------------
# acceptance report: one line per criterion, repeated in the terminal summary

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    def report(tag: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} {tag}: {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
