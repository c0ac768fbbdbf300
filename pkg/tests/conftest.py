import numpy as np
import pytest

from ggtorus import make_grid
from ggtorus.rng import CounterRng


@pytest.fixture(scope="session")
def t2():
    return make_grid(2, 16)


@pytest.fixture(scope="session")
def t2_small():
    return make_grid(2, 8)


@pytest.fixture(scope="session")
def t3():
    return make_grid(3, 12)


@pytest.fixture(scope="session")
def t3_small():
    return make_grid(3, 8)


@pytest.fixture
def rng(request):
    return CounterRng(2024, request.node.name)


def l2(field):
    return field.norm()


def rel(diff, *refs):
    scale = max([r.norm() for r in refs] + [1e-12])
    return diff.norm() / scale
