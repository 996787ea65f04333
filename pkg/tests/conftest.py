import numpy as np
import pytest

from intertwine.measure import build_measure
from intertwine.potential import make_coupled_quartic, make_gaussian, make_gen_cauchy, make_subbotin


def builtins():
    return [make_gaussian(1), make_gaussian(2), make_gaussian(3), make_subbotin(2, 4.0),
            make_subbotin(2, 3.0), make_gen_cauchy(2, 4.0), make_coupled_quartic(0.1)]


@pytest.fixture(scope="session")
def gauss2_measure():
    return build_measure(make_gaussian(2), 192)


@pytest.fixture(scope="session")
def cauchy_measure():
    return build_measure(make_gen_cauchy(2, 4.0), 192)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
