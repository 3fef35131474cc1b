import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.Generator(np.random.Philox(key=1234))


@pytest.fixture
def triangle_system():
    """Three pairwise sets on three elements; exact minimum discrepancy 2."""
    from discwalk import SetSystemInstance
    return SetSystemInstance(n=3, sets=((0, 1), (0, 2), (1, 2)))
