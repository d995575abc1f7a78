import numpy as np
import pytest

from tests.synth import write_synthetic_csv


@pytest.fixture(scope="session")
def small_csv(tmp_path_factory):
    """A small balanced-ish synthetic dataset: 340 rows, 40 frauds."""
    path = tmp_path_factory.mktemp("data") / "synthetic.csv"
    write_synthetic_csv(path, n_clean=300, n_fraud=40, seed=5)
    return path


@pytest.fixture()
def rng():
    return np.random.Generator(np.random.PCG64(123))
