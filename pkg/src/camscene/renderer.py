"""Z-buffered point-splat rendering and shaping-mask extraction.

The splat footprint is a square of Chebyshev radius radius_px around the
rounded projection, written under a strict z < depth_buffer test. No hole
filling or blending: holes are exactly what the shaping mask must exclude.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidKernelError, ShapeMismatchError, ValidationError
from .geometry import CameraIntrinsics, Pose, Trajectory, invert_pose
from .rasters import PointCloud, _frozen

NEAR_PLANE = 1e-4


@dataclass(frozen=True)
class RenderedFrame:
    """Splat output: color, z-buffer (+inf where empty) and visibility."""

    color: np.ndarray
    depth_buffer: np.ndarray
    visibility: np.ndarray

    def __post_init__(self):
        color = np.asarray(self.color, dtype=np.float64)
        depth = np.asarray(self.depth_buffer, dtype=np.float64)
        vis = np.asarray(self.visibility, dtype=bool)
        if color.ndim != 3 or color.shape[2] != 3:
            raise ValidationError(f"color must be HxWx3, got {color.shape}")
        if depth.shape != color.shape[:2] or vis.shape != color.shape[:2]:
            raise ShapeMismatchError("color, depth_buffer and visibility shapes disagree")
        if not np.array_equal(vis, np.isfinite(depth)):
            raise ValidationError("visibility must equal finiteness of the depth buffer")
        if np.any(color[~vis] != 0.0):
            raise ValidationError("color must be zero where invisible")
        object.__setattr__(self, "color", _frozen(color))
        object.__setattr__(self, "depth_buffer", _frozen(depth))
        object.__setattr__(self, "visibility", _frozen(vis))

    @property
    def height(self) -> int:
        return self.color.shape[0]

    @property
    def width(self) -> int:
        return self.color.shape[1]


@dataclass(frozen=True)
class ShapingMask:
    """Pixels safe to reference during noise shaping; a subset of visibility."""

    mask: np.ndarray
    kernel_size: int

    def __post_init__(self):
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2:
            raise ValidationError(f"mask must be HxW, got shape {mask.shape}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise InvalidKernelError(f"kernel_size must be odd and >= 1, got {self.kernel_size}")
        object.__setattr__(self, "mask", _frozen(mask))


def project_point(p_world, pose_w2c: Pose, intrinsics: CameraIntrinsics):
    """Project one world point; returns (u, v, z) or None when behind the near plane."""
    cam = pose_w2c.rotation @ np.asarray(p_world, dtype=np.float64) + pose_w2c.translation
    z = float(cam[2])
    if z <= NEAR_PLANE:
        return None
    u = intrinsics.fx * float(cam[0]) / z + intrinsics.cx
    v = intrinsics.fy * float(cam[1]) / z + intrinsics.cy
    return (u, v, z)


def _project_cloud(cloud: PointCloud, pose_w2c: Pose, intrinsics: CameraIntrinsics):
    cam = cloud.positions @ pose_w2c.rotation.T + pose_w2c.translation
    z = cam[:, 2]
    front = z > NEAR_PLANE
    u = np.full(z.shape, np.nan)
    v = np.full(z.shape, np.nan)
    u[front] = intrinsics.fx * cam[front, 0] / z[front] + intrinsics.cx
    v[front] = intrinsics.fy * cam[front, 1] / z[front] + intrinsics.cy
    return u, v, z, front


def splat(
    cloud: PointCloud,
    pose_w2c: Pose,
    intrinsics: CameraIntrinsics,
    radius_px: int = 0,
) -> RenderedFrame:
    """Render a point cloud into a z-buffered frame.

    A point whose rounded projection lands in the raster writes its color
    and depth into every pixel within Chebyshev radius radius_px (clipped
    to the raster) where its z is strictly closer than the current buffer.
    Where several points tie exactly, the earliest point in the cloud wins.
    """
    if radius_px < 0:
        raise ValidationError("radius_px must be >= 0")
    if cloud.frame_tag == "camera" and not pose_w2c.is_identity(1e-12):
        raise ValidationError(
            "camera-frame clouds can only be splatted with an identity pose; "
            "re-tag with as_world() when the source camera defines the world frame"
        )
    h, w = intrinsics.height, intrinsics.width
    depth = np.full((h, w), np.inf)
    color = np.zeros((h, w, 3))
    if len(cloud) == 0:
        return RenderedFrame(color, depth, np.zeros((h, w), dtype=bool))

    u, v, z, front = _project_cloud(cloud, pose_w2c, intrinsics)
    ui = np.full(u.shape, -1, dtype=np.int64)
    vi = np.full(v.shape, -1, dtype=np.int64)
    ui[front] = np.rint(u[front]).astype(np.int64)
    vi[front] = np.rint(v[front]).astype(np.int64)
    keep = front & (ui >= 0) & (ui < w) & (vi >= 0) & (vi < h)
    if not keep.any():
        return RenderedFrame(color, depth, np.zeros((h, w), dtype=bool))

    idx = np.nonzero(keep)[0]
    ui, vi, z = ui[idx], vi[idx], z[idx]
    cols = cloud.colors[idx] if cloud.colors is not None else np.ones((idx.size, 3))

    pix_list, z_list, order_list, col_list = [], [], [], []
    for dy in range(-radius_px, radius_px + 1):
        for dx in range(-radius_px, radius_px + 1):
            yy = vi + dy
            xx = ui + dx
            ok = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
            pix_list.append(yy[ok] * w + xx[ok])
            z_list.append(z[ok])
            order_list.append(idx[ok])
            col_list.append(cols[ok])
    pix = np.concatenate(pix_list)
    zs = np.concatenate(z_list)
    order = np.concatenate(order_list)
    cs = np.concatenate(col_list)

    # Sequential z-test semantics: per pixel, minimum z wins; the earliest
    # point in cloud order wins exact ties.
    rank = np.lexsort((order, zs, pix))
    pix_sorted = pix[rank]
    first = np.ones(pix_sorted.size, dtype=bool)
    first[1:] = pix_sorted[1:] != pix_sorted[:-1]
    winners = rank[first]

    flat_pix = pix[winners]
    depth.reshape(-1)[flat_pix] = zs[winners]
    color.reshape(-1, 3)[flat_pix] = cs[winners]
    return RenderedFrame(color, depth, np.isfinite(depth))


def render_preview(
    cloud: PointCloud,
    traj: Trajectory,
    intrinsics: CameraIntrinsics,
    radius_px: int = 1,
) -> list:
    """Render one frame per trajectory pose (canonical camera-to-world expected)."""
    if traj.convention != "camera_to_world":
        raise ValidationError("render_preview expects a camera_to_world trajectory")
    if not traj.canonical:
        raise ValidationError("render_preview expects a canonical trajectory (first pose identity)")
    world = cloud.as_world() if cloud.frame_tag == "camera" else cloud
    return [splat(world, invert_pose(p), intrinsics, radius_px) for p in traj.poses]


def shaping_mask(frame: RenderedFrame, kernel: int) -> ShapingMask:
    """Select visible pixels whose k x k neighborhood (clamped at the raster
    border) is fully visible; k = 1 degenerates to the visibility mask."""
    if kernel < 1 or kernel % 2 == 0:
        raise InvalidKernelError(f"kernel must be odd and >= 1, got {kernel}")
    vis = frame.visibility
    h, w = vis.shape
    r = kernel // 2
    mask = vis.copy()
    for dy in range(-r, r + 1):
        for dx in range(-r, r + 1):
            if dy == 0 and dx == 0:
                continue
            shifted = np.ones((h, w), dtype=bool)
            ys = slice(max(0, -dy), h - max(0, dy))
            xs = slice(max(0, -dx), w - max(0, dx))
            ys_src = slice(max(0, dy), h + min(0, dy))
            xs_src = slice(max(0, dx), w + min(0, dx))
            shifted[ys, xs] = vis[ys_src, xs_src]
            mask &= shifted
    return ShapingMask(mask, kernel)
