"""Shared fixtures; pins kernel threading to one thread for determinism."""
import os

for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS"):
    os.environ.setdefault(var, "1")

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def easy_dataset():
    from sstrack.synth import make_dataset
    return make_dataset("easy", seed=21, num=6)
