"""Generate the bundled synthetic scene and clip fixtures (deterministic).

Run from the repo root: python3 scripts/make_fixtures.py
Rewrites tests/fixtures/{scene,clip} with identical bytes on every run.
"""

import json
from pathlib import Path

import numpy as np

from camscene import io as cio
from camscene.geometry import (
    CameraIntrinsics,
    Pose,
    Trajectory,
    interpolate_keyframes,
    invert_pose,
    rotation_to_quat,
)
from camscene.rasters import DepthRaster

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "tests" / "fixtures"


def rot_y(deg):
    a = np.deg2rad(deg)
    return np.array([[np.cos(a), 0, np.sin(a)], [0, 1, 0], [-np.sin(a), 0, np.cos(a)]])


def rot_z(deg):
    a = np.deg2rad(deg)
    return np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1.0]])


def make_scene():
    d = FIXTURES / "scene"
    d.mkdir(parents=True, exist_ok=True)
    w, h = 48, 32
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    color = np.stack(
        [
            0.5 + 0.5 * np.sin(2 * np.pi * xx / w),
            0.5 + 0.5 * np.cos(2 * np.pi * yy / h),
            ((xx // 8 + yy // 8) % 2) * 0.6 + 0.2,
        ],
        axis=-1,
    )
    color = np.rint(color * 255) / 255
    cio.write_color_png(d / "image.png", color)

    depth = 1.2 + 0.4 * np.sin(xx / 6.0) + 0.2 * np.cos(yy / 5.0)
    depth[12:16, 20:26] = 0.0  # a hole, so masks are non-trivial
    cio.write_pfm(d / "depth.pfm", DepthRaster(depth.astype(np.float32)))

    (d / "intrinsics.json").write_text(
        json.dumps(
            {"fx": 36.0, "fy": 36.0, "cx": 24.0, "cy": 16.0, "width": w, "height": h},
            indent=1,
        )
        + "\n"
    )

    keys = [
        Pose.identity(),
        Pose(rot_y(3.0), [0.05, 0.0, -0.10]),
        Pose(rot_y(6.0), [0.12, 0.02, -0.25]),
        Pose(rot_y(10.0), [0.20, 0.03, -0.45]),
    ]
    keyframes = Trajectory(tuple(keys), convention="camera_to_world", scale_space="metric")
    cio.write_trajectory(d / "keyframes.json", keyframes)

    dense = interpolate_keyframes(keys, 16)
    perturbed = [dense.poses[0]]
    for i, p in enumerate(dense.poses[1:], start=1):
        perturbed.append(
            Pose(p.rotation @ rot_z(0.5), p.translation + np.array([0.01, -0.005, 0.002]) * i)
        )
    cio.write_trajectory(
        d / "gen_perturbed.json",
        Trajectory(tuple(perturbed), convention="camera_to_world", scale_space="metric"),
    )


def make_clip():
    d = FIXTURES / "clip"
    (d / "colmap").mkdir(parents=True, exist_ok=True)
    (d / "depths").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(7171)
    w, h = 48, 32
    alpha = 1.75
    timestamps = [0, 33366, 66733, 100100, 133466]
    fx_n, fy_n, cx_n, cy_n = 0.5, 0.75, 0.5, 0.5
    k = CameraIntrinsics.from_normalized(fx_n, fy_n, cx_n, cy_n, w, h)
    kinv = np.linalg.inv(k.matrix())

    c2w = [Pose.identity()]
    for i in range(1, len(timestamps)):
        c2w.append(Pose(rot_y(1.5 * i), np.array([0.03, -0.01, -0.06]) * i))
    w2c = [invert_pose(p) for p in c2w]

    pose_lines = ["https://example.com/synthetic-clip"]
    for ts, p in zip(timestamps, w2c):
        nums = [repr(float(x)) for x in (fx_n, fy_n, cx_n, cy_n, 0.0, 0.0)]
        nums += [repr(float(x)) for x in np.column_stack([p.rotation, p.translation]).reshape(-1)]
        pose_lines.append(" ".join([str(ts)] + nums))
    (d / "poses.txt").write_text("\n".join(pose_lines) + "\n")

    points_per_frame = 25
    image_lines = ["# synthetic images"]
    point_rows = []
    pid = 0
    for f, (ts, pose_c2w, pose_w2c) in enumerate(zip(timestamps, c2w, w2c)):
        raster = np.ones((h, w))
        flat = rng.choice(w * h, size=points_per_frame, replace=False)
        us, vs = flat % w, flat // w
        obs = []
        for u, v in zip(us, vs):
            depth_sfm = float(rng.uniform(0.8, 1.6))
            p_cam = depth_sfm * (kinv @ np.array([u, v, 1.0]))
            p_world = pose_c2w.apply(p_cam)
            raster[v, u] = alpha * depth_sfm
            obs.append((float(u), float(v), pid))
            point_rows.append((pid, p_world, f + 1, len(obs) - 1))
            pid += 1
        q = rotation_to_quat(pose_w2c.rotation)
        t = pose_w2c.translation
        image_lines.append(
            f"{f + 1} "
            + " ".join(repr(float(x)) for x in q)
            + " "
            + " ".join(repr(float(x)) for x in t)
            + f" 1 {ts}.png"
        )
        image_lines.append(" ".join(f"{repr(x)} {repr(y)} {p}" for x, y, p in obs))
        cio.write_pfm(d / "depths" / f"{ts}.pfm", DepthRaster(raster.astype(np.float32)))

    point_lines = ["# synthetic points3D"]
    for pid, xyz, image_id, idx2d in point_rows:
        coords = " ".join(repr(float(x)) for x in xyz)
        point_lines.append(f"{pid} {coords} 128 128 128 0.5 {image_id} {idx2d}")
    (d / "colmap" / "images.txt").write_text("\n".join(image_lines) + "\n")
    (d / "colmap" / "points3D.txt").write_text("\n".join(point_lines) + "\n")


if __name__ == "__main__":
    make_scene()
    make_clip()
    print(f"fixtures written under {FIXTURES}")
