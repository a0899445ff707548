"""Pytest configuration and fixtures."""

import os
import sys

import pytest

# Ensure the src directory is in the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

# Keep configuration independent of the developer's shell
for _var in ("FSA_MAX_DEPTH", "FSA_ATOM_BUDGET", "FSA_LOG_LEVEL", "FSA_NO_FAST_PATH", "FSA_TRIALS", "FSA_MAX_WORKERS"):
    os.environ.pop(_var, None)

try:
    from hypothesis import settings

    settings.register_profile("default", deadline=None, max_examples=100)
    settings.register_profile("thorough", deadline=None, max_examples=1000)
    settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))
except ImportError:  # pragma: no cover
    pass


@pytest.fixture
def load():
    """Parse a bundled corpus program by name."""
    from fractalsym import corpus

    return corpus.load


@pytest.fixture
def swap_scale(load):
    return load("swap_scale")


@pytest.fixture
def lu_blocked(load):
    return load("lu_blocked")


@pytest.fixture
def config():
    """Default analysis configuration."""
    from fractalsym.config import AnalysisConfig

    return AnalysisConfig()


@pytest.fixture
def pivot_fact():
    """forall j in [1, N]: j <= p(j) <= N, as extra bindings."""
    from fractalsym.affine import Bindings
    from fractalsym.syntax import parse_formula

    return Bindings.from_formulas([parse_formula("forall j in [1, N]: j <= p(j) <= N")])


def pytest_configure(config):
    """Configure pytest with custom markers."""
    config.addinivalue_line("markers", "integration: mark test as integration test (runs the CLI end to end)")
    config.addinivalue_line("markers", "slow: mark test as slow running")
