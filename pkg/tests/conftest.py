import numpy as np
import pytest
from hypothesis import settings

from qresource import sdp

settings.register_profile("qresource", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("qresource")

# every solve of the session, audited by the duality-hygiene acceptance check
SESSION_SOLVES: list = []


def pytest_collection_modifyitems(session, config, items):
    # acceptance criteria run last so the solve audit covers the whole suite
    items.sort(key=lambda it: it.nodeid.startswith("tests/test_acceptance.py") or "test_acceptance" in it.nodeid)


@pytest.fixture(scope="session", autouse=True)
def _audit_solves():
    with sdp.record_solves() as bucket:
        yield bucket
        SESSION_SOLVES.extend(bucket)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
