"""
Main conftest.py file for pytest configuration and global fixtures
"""
import pytest

from config.environment import get_config

# Load shared fixtures (available to all tests)
pytest_plugins = [
    "fixtures.sample_fixtures",
]


@pytest.fixture(scope="session")
def environment_config():
    """Environment configuration instance"""
    return get_config()


@pytest.fixture(scope="session")
def engine_settings(environment_config):
    """Coalition engine knobs from the active environment"""
    return environment_config.engine


@pytest.fixture(autouse=True)
def single_thread(monkeypatch):
    """Keep XPER_THREADS from the developer shell out of the tests"""
    monkeypatch.delenv("XPER_THREADS", raising=False)
    yield


def pytest_configure(config):
    """Configure pytest with custom markers"""
    config.addinivalue_line(
        "markers", "smoke: mark test as smoke test"
    )
    config.addinivalue_line(
        "markers", "regression: mark test as regression test"
    )
    config.addinivalue_line(
        "markers", "integration: mark test as integration test"
    )
    config.addinivalue_line(
        "markers", "slow: mark test as a Monte Carlo or large enumeration run"
    )
    config.addinivalue_line(
        "markers", "property: mark test as a hypothesis property test"
    )
    config.addinivalue_line(
        "markers", "oracle: mark test as a check against an independent reference"
    )
    config.addinivalue_line(
        "markers", "cli: mark test as a command-line test"
    )
