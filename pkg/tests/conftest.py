import numpy as np
import pytest

from camscene.geometry import Pose, Trajectory, quat_to_rotation


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform-ish random rotation from a normalized Gaussian quaternion."""
    q = rng.standard_normal(4)
    return quat_to_rotation(q / np.linalg.norm(q))


def random_pose(rng: np.random.Generator, t_scale: float = 1.0) -> Pose:
    return Pose(random_rotation(rng), rng.standard_normal(3) * t_scale)


def random_c2w_trajectory(rng: np.random.Generator, n: int) -> Trajectory:
    return Trajectory(
        tuple(random_pose(rng) for _ in range(n)), convention="camera_to_world"
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
