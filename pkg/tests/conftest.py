import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from orliczkit.modular import ModularFunction

settings.register_profile(
    "repo", deadline=None, max_examples=60, derandomize=True,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


def norm(xi):
    return np.sqrt(np.sum(np.asarray(xi) ** 2, axis=-1))


@pytest.fixture
def quad2():
    """|xi|^2 on R^2."""
    return ModularFunction(fn=lambda t, x, xi: np.sum(xi * xi, axis=-1), dim=2, isotropic=True,
                           profile=lambda t, x, s: s * s, homogeneous=True)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
