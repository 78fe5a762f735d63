import pytest

from helpers import staged_raw, staged_transitioned


@pytest.fixture
def staged():
    return staged_transitioned()


@pytest.fixture
def staged_pre():
    return staged_raw()
