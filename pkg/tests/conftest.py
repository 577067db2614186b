import numpy as np
import pytest

from pbef.functions import SmoothFunction
from pbef.model import CoxIngersollRoss, OrnsteinUhlenbeck


@pytest.fixture
def ou_full():
    """OU with all three parameters free, theta = (kappa, eta, xi)."""
    return OrnsteinUhlenbeck()


@pytest.fixture
def ou_mean():
    return OrnsteinUhlenbeck(free=("eta",), fixed={"kappa": 1.0, "xi": 1.0})


@pytest.fixture
def ou_two():
    """OU with theta = (eta, kappa) and xi = 1."""
    return OrnsteinUhlenbeck(free=("eta", "kappa"), fixed={"xi": 1.0})


@pytest.fixture
def cir_full():
    return CoxIngersollRoss()


@pytest.fixture
def x():
    return SmoothFunction.identity()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
