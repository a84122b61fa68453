import numpy as np
import pytest

from python_rotkit import so3


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240607)


@pytest.fixture
def rotations(rng: np.random.Generator) -> np.ndarray:
    """A batch of Haar-uniform rotations."""
    return so3.sample_uniform(rng, 1000)


@pytest.fixture
def many_rotations() -> np.ndarray:
    return so3.sample_uniform(np.random.default_rng(7), 10000)


@pytest.fixture
def out_dir(tmp_path, monkeypatch):
    monkeypatch.delenv("ROTKIT_OUT", raising=False)
    return tmp_path / "out"
