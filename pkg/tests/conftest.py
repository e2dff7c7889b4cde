import numpy as np
import pytest

from wealthgame.config import validate_config


@pytest.fixture(scope="session")
def lin_spec():
    """Base linear market, accurate homogeneous prior, h0 = 0.05."""
    return validate_config("").market


@pytest.fixture(scope="session")
def lin_agents():
    return validate_config("").agents


@pytest.fixture(scope="session")
def nl_spec():
    cfg = validate_config("[scenario]\npresets = nl_base, risk_base\n[modes]\nsolver = fbsde\n")
    return cfg.market


def scenario(text: str):
    return validate_config(text)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
