from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from oacbench.kinchain import builtin_chain


@pytest.fixture(scope="session")
def panda():
    return builtin_chain("panda7")


@pytest.fixture(scope="session")
def planar():
    return builtin_chain("planar2")


@pytest.fixture()
def rng():
    return np.random.default_rng(20240817)


def random_configuration(rng, chain):
    lo, hi = chain.q_lower, chain.q_upper
    return lo + rng.random(chain.n) * (hi - lo)
