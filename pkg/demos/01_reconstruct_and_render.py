"""Unproject a synthetic depth image into a point cloud, design a small
camera path, and render the preview frames + shaping masks along it."""

from pathlib import Path

import numpy as np

from camscene import (
    CameraIntrinsics,
    DepthRaster,
    Pose,
    interpolate_keyframes,
    render_preview,
    shaping_mask,
    unproject,
)
from camscene import io as cio

OUT = Path(__file__).parent / "out" / "01"
OUT.mkdir(parents=True, exist_ok=True)

W, H = 96, 64
k = CameraIntrinsics(fx=72.0, fy=72.0, cx=48.0, cy=32.0, width=W, height=H)

# a synthetic room: textured back wall with a hole where depth failed
yy, xx = np.meshgrid(np.arange(H), np.arange(W), indexing="ij")
color = np.stack(
    [0.5 + 0.5 * np.sin(xx / 7.0), 0.5 + 0.5 * np.cos(yy / 5.0), ((xx // 12) % 2) * 0.8 + 0.1],
    axis=-1,
)
depth = 2.0 + 0.6 * np.sin(xx / 15.0) + 0.3 * np.cos(yy / 9.0)
depth[24:34, 40:56] = 0.0  # depth-prediction hole

cloud = unproject(DepthRaster(depth), k, color).as_world()
print(f"unprojected {len(cloud)} points from a {W}x{H} raster")

def rot_y(deg):
    a = np.deg2rad(deg)
    return np.array([[np.cos(a), 0, np.sin(a)], [0, 1, 0], [-np.sin(a), 0, np.cos(a)]])

keys = [
    Pose.identity(),
    Pose(rot_y(4.0), [0.15, 0.0, -0.2]),
    Pose(rot_y(8.0), [0.30, 0.05, -0.5]),
]
traj = interpolate_keyframes(keys, 12)
frames = render_preview(cloud, traj, k, radius_px=1)

for i, frame in enumerate(frames):
    mask = shaping_mask(frame, kernel=3)
    cio.write_color_png(OUT / f"color_{i:03d}.png", frame.color)
    cio.write_pbm(OUT / f"mask_{i:03d}.pbm", mask.mask)
    visible = int(frame.visibility.sum())
    selected = int(mask.mask.sum())
    print(f"frame {i:2d}: {visible:5d} visible px, {selected:5d} selected by the k=3 mask")

print(f"wrote frames and masks to {OUT}")
