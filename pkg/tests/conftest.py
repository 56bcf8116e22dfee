import pytest

from rwmcv import targets


@pytest.fixture(scope="session")
def normal():
    return targets.standard_normal()


@pytest.fixture(scope="session")
def bimodal():
    return targets.bimodal_mixture()
