import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from laydown import potential as pot
from laydown.kinetic import FokkerPlanck, GridCfg, make_grid

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def family2():
    return pot.normalize_potential(pot.PotentialSpec.family(1.0, 2.0))


@pytest.fixture(scope="session")
def gauss1():
    return pot.normalize_potential(pot.PotentialSpec.quadratic(1.0))


@pytest.fixture(scope="session")
def small_grid(family2):
    return make_grid(family2, GridCfg(24, 24, 16))


@pytest.fixture(scope="session")
def mid_grid(family2):
    return make_grid(family2, GridCfg(48, 48, 32))


def random_field(grid, rng, positive=False):
    """e^{-V} times noise: the natural scale for <.,.>_0."""
    z = rng.standard_normal(grid.shape)
    if positive:
        z = np.abs(z) + 0.1
    return grid.rho[:, :, None] * z


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fp_small(small_grid):
    return FokkerPlanck(small_grid, D=1.0, kappa=0.1)


@pytest.fixture
def report(request):
    """Record one acceptance line; all lines are printed in the terminal summary."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def _report(n, ok, detail):
        lines.append((n, f"CRITERION {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"))
        return ok

    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines, key=lambda t: t[0]):
            terminalreporter.write_line(line)
