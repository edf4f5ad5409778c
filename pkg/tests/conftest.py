from pathlib import Path

import pytest

from models.agent import GroupSpec, NoiseKind, OpinionDist
from models.scenario import ScenarioConfig
from services.config_parser import load_config

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-size acceptance scenarios")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size acceptance scenario, needs --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def two_camps_path():
    return SCENARIO_DIR / "paper_sec4.cfg"


@pytest.fixture
def two_camps_config(two_camps_path):
    """The shipped 60%-stubborn scenario."""
    return load_config(two_camps_path)


@pytest.fixture
def small_config():
    """A quick two-camp scenario: 200 agents, half stubborn, two flexible groups."""
    return ScenarioConfig(
        stubborn_groups=(
            GroupSpec(weight=0.5, p=0.6, q=0.0, w0=OpinionDist.uniform(-0.8, -0.6)),
            GroupSpec(weight=0.5, p=0.2, q=0.0, w0=OpinionDist.uniform(0.4, 0.8)),
        ),
        flexible_groups=(
            GroupSpec(weight=0.5, p=0.5, q=0.5, w0=OpinionDist.uniform(0.3, 1.0)),
            GroupSpec(weight=0.5, p=0.3, q=0.7, w0=OpinionDist.uniform(-0.2, 0.5)),
        ),
        alpha0=0.5,
        gamma=0.05,
        sigma=0.0,
        noise=NoiseKind.QUADRATIC,
        n_agents=200,
        tau_end=5.0,
        seed=7,
        record_every=1.0,
        quantile_points=64,
    )
