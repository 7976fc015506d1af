from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

FIXTURES = Path(__file__).parent / "fixtures"

# property tests replay the same examples on every run
settings.register_profile("branchnet", derandomize=True, deadline=None, max_examples=100)
settings.load_profile("branchnet")


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run training-heavy acceptance tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def fixture_dir() -> Path:
    return FIXTURES


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _no_log_file(monkeypatch):
    monkeypatch.setenv("LOG_FILE", "")
