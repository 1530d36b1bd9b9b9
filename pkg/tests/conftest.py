import numpy as np
import pytest

from cranioforge.dataset import generate_pairs
from cranioforge.facemodel import build_synthetic_model
from cranioforge.landmarks import default_schema
from cranioforge.tdd import fit_tdd_global, fit_tdd_regional


@pytest.fixture(scope="session")
def schema():
    return default_schema()


@pytest.fixture(scope="session")
def pairing(schema):
    return schema.pairing()


@pytest.fixture(scope="session")
def model():
    return build_synthetic_model(seed=7)


@pytest.fixture(scope="session")
def small_pairs(model):
    return generate_pairs(model, 16, seed=3)


@pytest.fixture(scope="session")
def training_depths(small_pairs):
    return [p.gt_depths for p in small_pairs]


@pytest.fixture(scope="session")
def tdd_global(training_depths):
    return fit_tdd_global(training_depths)


@pytest.fixture(scope="session")
def tdd_regional(training_depths, schema):
    return fit_tdd_regional(training_depths, schema.partition())


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
