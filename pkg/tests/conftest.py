# tests/conftest.py

import pytest

from src.config import config
from src.domain import AgentProfile, ProjectSpec, SocialNetwork
from src.market import LMSR
from src.mechanisms import MechanismKind, MechanismSpec
from src.rbf import RbfSpec


def build_spec(kind, h0=4.0, T=10.0, B=1.0, b=1.0, sigma=0.4):
    kind = MechanismKind(kind)
    return MechanismSpec(
        kind=kind,
        project=ProjectSpec(h0, T),
        refund_budget=B if kind.uses_budget else None,
        cost_function=LMSR(liquidity=b) if kind.uses_market else None,
        rbf=RbfSpec("tanh", sigma) if kind.uses_referrals else None,
    )


@pytest.fixture
def make_spec():
    return build_spec


@pytest.fixture
def pair():
    """Two agents valuing the project at 3, arriving at 0 and 1."""
    return SocialNetwork([
        AgentProfile(1, 3.0, 0.0, frozenset({2})),
        AgentProfile(2, 3.0, 1.0, frozenset({1})),
    ])


@pytest.fixture
def path3():
    """Three agents on a path 1-2-3 valuing the project at 2, arriving at 0, 1, 2."""
    return SocialNetwork([
        AgentProfile(1, 2.0, 0.0, frozenset({2})),
        AgentProfile(2, 2.0, 1.0, frozenset({1, 3})),
        AgentProfile(3, 2.0, 2.0, frozenset({2})),
    ])


@pytest.fixture
def star():
    """Hub 1 with four leaves."""
    agents = [AgentProfile(1, 1.0, 0.0, frozenset({2, 3, 4, 5}))]
    agents += [AgentProfile(i, 1.0, 0.0, frozenset({1})) for i in range(2, 6)]
    return SocialNetwork(agents)


@pytest.fixture(autouse=True)
def quiet_console():
    quiet, verbose = config.QUIET, config.VERBOSE_LOGGING
    config.QUIET, config.VERBOSE_LOGGING = True, False
    yield
    config.QUIET, config.VERBOSE_LOGGING = quiet, verbose
