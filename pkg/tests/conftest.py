import numpy as np
import pytest

from posemorph.dataset import SynthConfig, generate_synthetic
from posemorph.topology import default_human_topology


@pytest.fixture(scope="session")
def topo():
    return default_human_topology()


@pytest.fixture(scope="session")
def small_dataset():
    """40 synthetic figures (32 labeled, 8 pose-only), shared across modules."""
    return generate_synthetic(SynthConfig(count=40, seed=3))


def random_pose_arrays(rng, joint_count=16, spread=20.0, center=(32.0, 32.0)):
    """Random joint coordinates around a center, all visible by default."""
    xy = np.asarray(center) + rng.uniform(-spread, spread, size=(joint_count, 2))
    visible = np.ones(joint_count, dtype=bool)
    return xy, visible
