import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from switchopt.envs import make_env

settings.register_profile(
    "suite",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def ex1():
    return make_env("ex1")


@pytest.fixture(scope="session")
def ex2():
    return make_env("ex2")


@pytest.fixture(scope="session")
def ex3():
    return make_env("ex3")


@pytest.fixture(scope="session")
def analytic1():
    return make_env("analytic1")


@pytest.fixture(scope="session")
def analytic2():
    return make_env("analytic2")


@pytest.fixture()
def results_root(tmp_path, monkeypatch):
    """Redirect experiment output into the test's temp directory."""
    root = tmp_path / "results"
    monkeypatch.setenv("SWITCHOPT_RESULTS", str(root))
    return root


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
