import numpy as np
import pytest

from cavityflow.ball_basis import build_basis
from cavityflow.coupling import InertiaSpec, build_tensors
from cavityflow.stokes_modes import FluidParams, compute_modes

REF_SOLID = (0.5, 1.5, 2.5)


@pytest.fixture(scope="session")
def basis34():
    return build_basis(3, 4)


@pytest.fixture(scope="session")
def modes48(basis34):
    return compute_modes(basis34, FluidParams(1.0, 1.0), 48)


@pytest.fixture(scope="session")
def ref_inertia():
    return InertiaSpec.from_solid(REF_SOLID)


@pytest.fixture(scope="session")
def tensors48(modes48, ref_inertia):
    return build_tensors(modes48, ref_inertia)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def ball_points(rng, n, rmax=0.999):
    """Uniform random points inside the ball of radius ``rmax``."""
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    return v * rmax * rng.uniform(size=(n, 1)) ** (1 / 3)


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
