import os
import sys

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("udep", max_examples=60, deadline=None)
settings.load_profile("udep")


@pytest.fixture(scope="session")
def gini():
    from udep.kernels import builtin_kernel
    return builtin_kernel("gini")


@pytest.fixture(scope="session")
def cvm():
    from udep.kernels import builtin_kernel
    return builtin_kernel("cvm")


@pytest.fixture(scope="session")
def hl():
    from udep.kernels import builtin_kernel
    return builtin_kernel("hl_indicator", t=0.5)


@pytest.fixture(scope="session")
def cvm_parts(cvm):
    from udep.kernels import analytic_parts
    return analytic_parts(cvm)


@pytest.fixture(scope="session")
def gini_parts(gini):
    from udep.kernels import analytic_parts
    return analytic_parts(gini)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def uniform_pairs(rng, size):
    return rng.random(size), rng.random(size)
