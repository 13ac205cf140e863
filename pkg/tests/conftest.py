import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tensornorms import scenarios
from tensornorms.dynamics import propagate_stt

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def iss():
    return scenarios.iss()


@pytest.fixture(scope="session")
def nrho():
    return scenarios.nrho()


@pytest.fixture(scope="session")
def iss_stack(iss):
    return propagate_stt(iss.model, iss.x0, iss.t0, iss.tf, order=3)


@pytest.fixture(scope="session")
def nrho_stack(nrho):
    return propagate_stt(nrho.model, nrho.x0, nrho.t0, nrho.tf, order=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from oracles import ACCEPTANCE_LINES
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
