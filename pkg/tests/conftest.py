import numpy as np
import pytest

from fplab.data import synth_texture_dataset


@pytest.fixture(scope="session")
def small_dataset():
    return synth_texture_dataset(num_classes=4, per_class=20, size=16, seed=11)


@pytest.fixture(scope="session")
def small_test_dataset():
    return synth_texture_dataset(num_classes=4, per_class=10, size=16, seed=12)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
