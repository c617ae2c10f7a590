import numpy as np
import pytest

from selfcal.geometry import Pose, compose, exp, inverse
from selfcal.keyframer import MotionPair, default_covariance


def random_pose(rng, max_angle=np.pi - 0.1, scale=1.0):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return Pose.from_rotvec(axis * rng.uniform(0.0, max_angle), rng.normal(size=3) * scale)


def consistent_pair(theta, motion_b, cov=None):
    """Pair satisfying A X = X B exactly for the extrinsic ``theta``."""
    motion_a = compose(compose(theta, motion_b), inverse(theta))
    return MotionPair(0.0, 1.0, motion_a, motion_b, default_covariance() if cov is None else cov)


def exciting_pairs(theta, n, rng, angle=0.6, step=0.4):
    return [consistent_pair(theta, exp(np.r_[rng.normal(size=3) * step, rng.normal(size=3) * angle])) for _ in range(n)]


@pytest.fixture
def rng():
    return np.random.default_rng(7)
