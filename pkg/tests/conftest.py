import numpy as np
import pytest

from lieopt import backend

ALGEBRA_DIMS = {"so3": 3, "se3": 6, "rxso3": 4, "sim3": 7}


@pytest.fixture(params=backend.available())
def kernel_backend(request):
    """Run the test once per built kernel backend."""
    with backend.use(request.param):
        yield request.param


def rotation_slice(kind_name):
    return slice(0, 3) if kind_name in ("so3", "rxso3") else slice(3, 6)


def clip_rotation(x, kind_name, max_norm):
    """Scale tangents so the rotation part stays inside the principal ball."""
    rot = rotation_slice(kind_name)
    norms = np.linalg.norm(x[:, rot], axis=1)
    factor = np.minimum(1.0, max_norm / np.maximum(norms, 1e-300))
    x = x.copy()
    x[:, rot] *= factor[:, None]
    return x
