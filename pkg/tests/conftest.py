import os
import sys

import numpy as np
import pytest

import depthstyle

sys.path.insert(0, os.path.dirname(__file__))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def fixtures():
    def path(name):
        return depthstyle.fixture_path(name)

    return path


@pytest.fixture(autouse=True)
def _isolated_cache(monkeypatch):
    monkeypatch.delenv("DEPTHSTYLE_CACHE", raising=False)
