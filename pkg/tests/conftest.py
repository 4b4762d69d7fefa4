import numpy as np
import pytest

from densitysteer import diffeo, lti, steer


@pytest.fixture(scope="session")
def double_integrator():
    return lti.double_integrator()


@pytest.fixture(scope="session")
def tanh_plan(double_integrator):
    """Double integrator, T = 1, psihat = z + 0.5 tanh(z)."""
    return steer.plan_from_psihat(double_integrator, 1.0, diffeo.tanh_monotone(2, 0.5))


def rng(seed=0):
    return np.random.default_rng(seed)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = next((m for n, m in sys.modules.items() if n.endswith("test_acceptance")), None)
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
