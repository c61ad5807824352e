import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def sl2_build():
    from cocyclekit import covering as cv

    return cv.build_sl_covering_family(2, 0.5, cv.SearchConfig(seed=0))


@pytest.fixture(scope="session")
def sigma5(sl2_build):
    from cocyclekit import perturb as pt
    from cocyclekit.cocycle import LocallyConstantCocycle
    from cocyclekit.symbolic import SFT

    A = LocallyConstantCocycle.identity(SFT.full(5), 2)
    return pt.make_covering_cocycle(A, 0.5, family=sl2_build)
