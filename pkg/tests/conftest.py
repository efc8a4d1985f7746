import numpy as np
import pytest

from synth import make_reference


@pytest.fixture(scope="session")
def small_ref():
    """Three 100-frame parts, one bar every 10 frames (30 bars)."""
    return make_reference([100, 100, 100], seed=11, bar_len=10)


@pytest.fixture(scope="session")
def medium_ref():
    """Five 1,500-frame parts, bars every 50 frames."""
    return make_reference([1500] * 5, seed=7, bar_len=50)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(1234)
