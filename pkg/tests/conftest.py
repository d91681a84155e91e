"""Shared test setup.

The thread-count cap must be raised before numba is imported anywhere,
otherwise set_num_threads(8) in the determinism tests would be illegal on
boxes that report a single CPU. Environment wins over detection, so setting
it here (conftest runs before any test module import) is sufficient.
"""

import os

os.environ.setdefault("NUMBA_NUM_THREADS", "8")

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
