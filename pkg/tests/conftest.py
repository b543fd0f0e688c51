import pytest

from tests.desk import DeskRuns


@pytest.fixture(scope="session")
def desk():
    return DeskRuns()
