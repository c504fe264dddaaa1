import numpy as np
import pytest

from greenlab import Domain, Mesh, OperatorSpec, make_preset


@pytest.fixture
def periodic_1d():
    return Domain((0.0,), (1.0,), "periodic")


@pytest.fixture
def dirichlet_1d():
    return Domain((0.0,), (1.0,), "dirichlet")


@pytest.fixture
def periodic_2d():
    return Domain((0.0, 0.0), (1.0, 1.0), "periodic")


@pytest.fixture
def mesh32(periodic_1d):
    return Mesh(periodic_1d, (32,), tau=1.0 / 512, t0=0.0, steps=64)


@pytest.fixture
def heat_spec(periodic_1d):
    return OperatorSpec(make_preset("heat", n=1), periodic_1d)


def bundle_1d(domain):
    """The bundled 1d presets used by the dynamics acceptance checks."""
    h = domain.lengths[0] / 64  # checkerboard tiles aligned to a 64-cell grid
    return [
        OperatorSpec(make_preset("heat", n=1), domain),
        OperatorSpec(make_preset("t-oscillating", n=1, period=0.11), domain),
        OperatorSpec(make_preset("x-oscillatory", n=1,
                                 wavelength=float(domain.lengths[0])), domain),
        OperatorSpec(make_preset("checkerboard", n=1, period=float(2 * h)), domain),
        OperatorSpec(make_preset("almost-diagonal", eps=0.1), domain),
        OperatorSpec(make_preset("rotating", w0=0.5, omega=2.0), domain),
    ]


def rng_slice(rng, N, mesh):
    return rng.standard_normal((N, mesh.ncells))
