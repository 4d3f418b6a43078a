import numpy as np
import pytest

from dopose.geometry import Pose


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation from the QR decomposition of a Gaussian."""
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 2] *= -1
    return q


def random_pose(rng: np.random.Generator, t_scale: float = 100.0) -> Pose:
    return Pose(random_rotation(rng), rng.normal(scale=t_scale, size=3))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
