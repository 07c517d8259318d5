import pytest

from antsearch.space import default_space


@pytest.fixture(scope="session")
def space():
    return default_space()
