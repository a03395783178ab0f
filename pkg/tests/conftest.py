import numpy as np
import pytest

from crvqa.synthetic import procedural_texture


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def textures():
    return [procedural_texture(64, seed=s) for s in range(10)]
