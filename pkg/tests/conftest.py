import numpy as np
import pytest
from hypothesis import settings

from edgeview import _accel

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")

BACKENDS = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    with _accel.use_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def bar_image(n, center, direction, length, width, value=1.0):
    """Filled rectangle with its long side along ``direction`` (x, y)."""
    d = np.asarray(direction, dtype=float)
    d /= np.linalg.norm(d)
    nrm = np.array([-d[1], d[0]])
    x, y = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    rx, ry = x - center[0], y - center[1]
    along = rx * d[0] + ry * d[1]
    across = rx * nrm[0] + ry * nrm[1]
    return np.where((np.abs(along) <= length / 2) & (np.abs(across) <= width / 2), value, 0.0)
