import numpy as np
import pytest

from semvb import Dataset, FactorSpec, TrueParameters, simulate
from semvb._rng import substream


@pytest.fixture(scope="session")
def single_spec():
    return FactorSpec(names=("visual",), blocks=(("x1", "x2", "x3"),))


@pytest.fixture(scope="session")
def single_params():
    return TrueParameters(
        nu=[5.0, 6.0, 2.2],
        lam=[1.0, 0.6, 0.75],
        psi=[0.5, 1.1, 0.8],
        sigma2=0.8,
    )


@pytest.fixture(scope="session")
def single_data(single_spec, single_params):
    return simulate(single_params, single_spec, 301, substream(7, "conftest-single"))


@pytest.fixture(scope="session")
def two_factor_spec():
    return FactorSpec(names=("A", "B"), blocks=(("a1", "a2", "a3"), ("b1", "b2")))


@pytest.fixture(scope="session")
def two_factor_params():
    return TrueParameters(
        nu=[0.5, 1.0, -0.5, 2.0, 0.0],
        lam=[1.0, 0.8, 1.2, 1.0, 0.7],
        psi=[0.5, 0.6, 0.7, 0.4, 0.5],
        Sigma=np.array([[1.0, 0.3], [0.3, 0.7]]),
    )


@pytest.fixture(scope="session")
def two_factor_data(two_factor_spec, two_factor_params):
    return simulate(
        two_factor_params, two_factor_spec, 200, substream(3, "conftest-multi")
    )


def random_instance(rng, p):
    """A small random model instance for property suites."""
    sizes = rng.integers(2, 7, size=p)
    names = tuple(f"F{k}" for k in range(p))
    blocks = tuple(
        tuple(f"c{k}_{j}" for j in range(sizes[k])) for k in range(p)
    )
    spec = FactorSpec(names=names, blocks=blocks)
    m = spec.m
    lam = rng.uniform(0.4, 1.5, size=m)
    lam[spec.reference_mask()] = 1.0
    if p == 1:
        cov = {"sigma2": float(rng.uniform(0.3, 1.5))}
    else:
        a = rng.uniform(-0.4, 0.4, size=(p, p))
        cov = {"Sigma": a @ a.T + np.eye(p)}
    params = TrueParameters(
        nu=rng.uniform(-2.0, 2.0, size=m),
        lam=lam,
        psi=rng.uniform(0.2, 1.5, size=m),
        **cov,
    )
    n = int(rng.integers(10, 101))
    data = simulate(params, spec, n, rng)
    return spec, params, data
