"""Synthetic clip construction with analytically known scale factors.

Points are unprojected from integer pixels of their observing frame, so the
bilinear depth sample returns the stored value exactly and every per-point
factor equals the constructed alpha.
"""

import numpy as np

from camscene.geometry import CameraIntrinsics, Pose, Trajectory, invert_pose
from camscene.rasters import DepthRaster
from camscene.scale_align import SparsePoint

from conftest import random_rotation


def make_clip(
    rng: np.random.Generator,
    alpha: float,
    n_frames: int = 5,
    points_per_frame: int = 20,
    width: int = 32,
    height: int = 24,
    corrupt_fraction: float = 0.0,
    corrupt_factor: float = 100.0,
):
    """Build (points, depths, intrinsics, traj_w2c) recovering exactly alpha.

    corrupt_fraction corrupts that share of each frame's depth samples by
    corrupt_factor (strictly less than half, so medians stay clean).
    """
    k = CameraIntrinsics(
        fx=width / 2, fy=width / 2, cx=width / 2, cy=height / 2, width=width, height=height
    )
    c2w = []
    for i in range(n_frames):
        r = random_rotation(rng) if i else np.eye(3)
        c2w.append(Pose(r @ np.eye(3), rng.uniform(-0.2, 0.2, 3)))
    w2c = tuple(invert_pose(p) for p in c2w)
    traj = Trajectory(w2c, convention="world_to_camera")

    kinv = np.linalg.inv(k.matrix())
    points = []
    depths = {}
    pid = 0
    for f in range(n_frames):
        raster = np.ones((height, width))
        flat = rng.choice(width * height, size=points_per_frame, replace=False)
        us, vs = flat % width, flat // width
        n_corrupt = int(np.floor(corrupt_fraction * points_per_frame))
        for j, (u, v) in enumerate(zip(us, vs)):
            d = rng.uniform(0.5, 1.9)
            p_cam = d * (kinv @ np.array([u, v, 1.0]))
            p_world = c2w[f].apply(p_cam)
            points.append(SparsePoint(id=pid, xyz_world=p_world, track=((f, float(u), float(v)),)))
            pid += 1
            metric = alpha * d
            if j < n_corrupt:
                metric *= corrupt_factor
            raster[v, u] = metric
        depths[f] = DepthRaster(raster)
    return points, depths, k, traj
