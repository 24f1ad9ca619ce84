import numpy as np
import pytest

from spme import constitutive as cl
from spme import porous_operator as po
from spme import robin_laplace as rl
from spme.geometry import build_grid


@pytest.fixture(scope="session")
def grid64():
    return build_grid(1, 1.0, 64)


@pytest.fixture(scope="session")
def op64(grid64):
    return rl.assemble(grid64, rl.RobinCoefficient.constant(grid64, 1.0))


@pytest.fixture(scope="session")
def basis64(op64):
    return rl.eigensolve(op64, 32)


@pytest.fixture(scope="session")
def grid512():
    return build_grid(1, 1.0, 512)


@pytest.fixture(scope="session")
def op512(grid512):
    return rl.assemble(grid512, rl.RobinCoefficient.constant(grid512, 1.0))


@pytest.fixture(scope="session")
def basis512(op512):
    return rl.eigensolve(op512, 8)


@pytest.fixture(scope="session")
def tiny16():
    grid = build_grid(1, 1.0, 16)
    op = rl.assemble(grid, rl.RobinCoefficient.constant(grid, 1.0))
    basis = rl.eigensolve(op, grid.node_count)  # full discrete spectrum
    return grid, op, basis


@pytest.fixture(scope="session")
def cubic_law():
    return cl.make_law("cubic")


@pytest.fixture(scope="session")
def linear_law():
    return cl.make_law("linear")


@pytest.fixture(scope="session")
def gravity_law():
    return cl.make_law("cubic_plus_linear")


@pytest.fixture(scope="session")
def stefan_law():
    return cl.make_law("stefan")


def random_dual_field(basis, rng, scale=1.0):
    coeff = rng.standard_normal(basis.J) / np.sqrt(basis.lambdas)
    from spme.geometry import DiscreteField

    return DiscreteField(basis.domain, scale * (basis.modes @ coeff),
                         validate=False)


@pytest.fixture(scope="session")
def probe_cfg(op64, basis64, gravity_law):
    return po.OperatorConfig(op64, gravity_law, K=1.0, lam=0.5, mu=2.5,
                             eps=0.01, basis=basis64)
