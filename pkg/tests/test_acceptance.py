"""Acceptance suite: one test per criterion, each printing a pass line with
its runtime (run with `pytest tests/test_acceptance.py -v -s`). Tolerances are
pinned here and nowhere else.
"""

import hashlib
import json
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from camscene.geometry import (
    CameraIntrinsics,
    Pose,
    Trajectory,
    apply_scale,
    canonicalize,
    invert_pose,
    unproject,
)
from camscene.metrics import MetricReport, TrajectoryPair, aggregate, rot_err, trans_err
from camscene.rasters import DepthRaster, PointCloud
from camscene.renderer import RenderedFrame, ShapingMask, project_point, shaping_mask, splat
from camscene.scale_align import ScaleAlignment, align_clip, filter_clips
from camscene.shaping import (
    LatentVideo,
    NoiseSchedule,
    PullOracle,
    ShapingConfig,
    TrueEpsOracle,
    add_noise,
    default_step_list,
    fresh_eps,
    masked_rmse_to_preview,
    sample_with_shaping,
    shape_latent,
    threshold_sweep,
)

from conftest import random_pose
from synth import make_clip

ROOT = Path(__file__).resolve().parents[1]
FIXTURES = ROOT / "tests" / "fixtures"


class Budget:
    def __init__(self, name, seconds):
        self.name = name
        self.seconds = seconds

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, *_):
        elapsed = time.perf_counter() - self.t0
        if exc_type is None:
            assert elapsed < self.seconds, f"{self.name}: {elapsed:.1f}s over {self.seconds}s budget"
            print(f"\nACCEPTANCE {self.name}: PASS ({elapsed:.2f}s < {self.seconds}s)")
        else:
            print(f"\nACCEPTANCE {self.name}: FAIL ({elapsed:.2f}s)")


def test_geometry_suite():
    with Budget("geometry", 5.0):
        rng = np.random.default_rng(11)
        # pose inverse / compose round-trips within 1e-9
        for _ in range(50):
            p = random_pose(rng)
            assert p.compose(invert_pose(p)).is_identity(1e-9)
            q = invert_pose(invert_pose(p))
            assert np.linalg.norm(q.rotation - p.rotation) < 1e-9
            assert np.linalg.norm(q.translation - p.translation) < 1e-9
            a, b = random_pose(rng), random_pose(rng)
            assert np.linalg.norm(a.compose(b).matrix() - a.matrix() @ b.matrix()) < 1e-9

        # canonicalization idempotence within 1e-12
        for _ in range(20):
            t = Trajectory(tuple(random_pose(rng) for _ in range(6)), convention="camera_to_world")
            once, twice = canonicalize(t), canonicalize(canonicalize(t))
            for x, y in zip(once.poses, twice.poses):
                assert np.linalg.norm(x.matrix() - y.matrix()) < 1e-12

        # unproject -> project round trip on 10 random 64x64 rasters
        k = CameraIntrinsics(fx=50.0, fy=45.0, cx=31.7, cy=32.4, width=64, height=64)
        for _ in range(10):
            depth_vals = rng.uniform(0.4, 8.0, (64, 64))
            depth_vals[rng.random((64, 64)) < 0.15] = 0.0
            raster = DepthRaster(depth_vals)
            cloud = unproject(raster, k)
            for src, pos in zip(cloud.source_pixel, cloud.positions):
                u0, v0 = int(src % 64), int(src // 64)
                u, v, z = project_point(pos, Pose.identity(), k)
                assert abs(u - u0) < 0.5 and abs(v - v0) < 0.5
                assert abs(z - depth_vals[v0, u0]) / depth_vals[v0, u0] < 1e-6


def test_alignment_recovery():
    with Budget("alignment", 30.0):
        rng = np.random.default_rng(23)
        alphas = rng.uniform(0.1, 10.0, 20)
        # clean clips: recovery within 1e-6 relative
        for i, alpha in enumerate(alphas):
            points, depths, k, traj = make_clip(
                np.random.default_rng(1000 + i), alpha=float(alpha), n_frames=5, points_per_frame=30
            )
            a = align_clip(points, depths, k, traj)
            assert abs(a.clip_alpha - alpha) / alpha < 1e-6

        # 10% corrupted observations (x100): within 1e-3 relative
        # (ceiling disabled so corrupted samples exercise the median, instead
        #  of being discarded by the 20 m validity cut)
        for i, alpha in enumerate(alphas):
            points, depths, k, traj = make_clip(
                np.random.default_rng(2000 + i),
                alpha=float(alpha),
                n_frames=5,
                points_per_frame=30,
                corrupt_fraction=0.1,
            )
            a = align_clip(points, depths, k, traj, max_depth=np.inf)
            assert abs(a.clip_alpha - alpha) / alpha < 1e-3

        # quantile filter rejects exactly the rank extremes of 100 clips
        clips = [
            ScaleAlignment(
                clip_id=f"c{i}",
                per_frame_factors={0: (0.5,), 1: (float(i + 1),)},
                frame_medians={0: 0.5, 1: float(i + 1)},
                clip_alpha=(0.5 + i + 1) / 2,
                max_frame_factor=float(i + 1),
                min_frame_factor=0.5,
            )
            for i in range(100)
        ]
        out = filter_clips(clips, q=0.02)
        assert [i for i, a in enumerate(out) if not a.accepted] == [0, 1, 98, 99]


def _mask_oracle(vis, k):
    h, w = vis.shape
    r = k // 2
    out = np.zeros_like(vis)
    for y in range(h):
        for x in range(w):
            if vis[y, x]:
                out[y, x] = vis[max(0, y - r) : y + r + 1, max(0, x - r) : x + r + 1].all()
    return out


def test_renderer_suite():
    with Budget("renderer", 10.0):
        rng = np.random.default_rng(37)
        # self-render identity: bit-exact at valid pixels
        k = CameraIntrinsics(fx=40.0, fy=40.0, cx=32.0, cy=32.0, width=64, height=64)
        depth_vals = rng.uniform(0.5, 5.0, (64, 64))
        depth_vals[rng.random((64, 64)) < 0.1] = 0.0
        raster = DepthRaster(depth_vals)
        colors = np.rint(rng.random((64, 64, 3)) * 255) / 255
        cloud = unproject(raster, k, colors).as_world()
        frame = splat(cloud, Pose.identity(), k, radius_px=0)
        valid = raster.valid_mask
        assert np.array_equal(frame.visibility, valid)
        assert frame.depth_buffer[valid].tobytes() == raster.values[valid].tobytes()
        assert frame.color[valid].tobytes() == colors[valid].tobytes()

        # z-buffer min-depth on adversarial coincident points
        k5 = CameraIntrinsics(fx=1.0, fy=1.0, cx=2.0, cy=2.0, width=5, height=5)
        n = 2000
        px, py = rng.integers(0, 5, n), rng.integers(0, 5, n)
        z = rng.uniform(0.5, 9.0, n)
        z[rng.integers(0, n, 100)] = 2.0  # exact ties
        pos = np.column_stack([(px - 2.0) * z, (py - 2.0) * z, z])
        got = splat(PointCloud(positions=pos, frame_tag="world"), Pose.identity(), k5, 0)
        for y in range(5):
            for x in range(5):
                sel = (px == x) & (py == y)
                assert got.depth_buffer[y, x] == (z[sel].min() if sel.any() else np.inf)

        # exhaustive 2^9 neighborhood semantics, k=3
        for bits in range(512):
            vis = np.array([(bits >> i) & 1 for i in range(9)], dtype=bool).reshape(3, 3)
            rf = RenderedFrame(
                np.where(vis[..., None], 0.5, 0.0) * np.ones(3),
                np.where(vis, 1.0, np.inf),
                vis,
            )
            assert np.array_equal(shaping_mask(rf, 3).mask, _mask_oracle(vis, 3))


def _sampler_fixture(seed, f=16, h=32, w=32):
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    preview = np.stack(
        [
            np.stack(
                [
                    0.5 + 0.5 * np.sin(2 * np.pi * (xx / w + i / f)),
                    0.5 + 0.5 * np.cos(2 * np.pi * yy / h),
                    np.full((h, w), 0.3),
                ],
                axis=-1,
            )
            for i in range(f)
        ]
    )
    target = np.stack(
        [
            np.stack(
                [
                    np.full((h, w), 0.7),
                    0.5 + 0.5 * np.cos(2 * np.pi * (yy / h - i / f)),
                    0.5 + 0.5 * np.sin(2 * np.pi * xx / w),
                ],
                axis=-1,
            )
            for i in range(f)
        ]
    )
    mask = (xx + yy) % 3 != 0
    frames = tuple(
        RenderedFrame(preview[i], np.ones((h, w)), np.ones((h, w), dtype=bool)) for i in range(f)
    )
    masks = tuple(ShapingMask(mask, 3) for _ in range(f))
    cfg = ShapingConfig(preview=frames, masks=masks, t_ns=900, rng_seed=seed)
    return cfg, LatentVideo(target)


def test_sampler_suite():
    with Budget("sampler", 60.0):
        # schedule identity: exact for all 1001 steps
        sched_default = NoiseSchedule.linear_beta()
        test_sched = NoiseSchedule.linear_alpha_bar()
        for sched in (sched_default, test_sched):
            for t in range(sched.num_steps + 1):
                assert sched.alpha_sq(t) + sched.sigma_sq(t) == 1.0
                assert abs(sched.alpha(t) ** 2 + sched.sigma(t) ** 2 - 1.0) < 1e-15

        # oracle-denoiser recovery < 1e-6 RMSE
        rng = np.random.default_rng(41)
        z0 = LatentVideo(rng.random((16, 32, 32, 3)))
        eps = LatentVideo(rng.standard_normal((16, 32, 32, 3)))
        init = add_noise(z0, sched_default.num_steps, eps, sched_default)
        cfg, target = _sampler_fixture(seed=0)
        steps = default_step_list(sched_default, 50)
        out = sample_with_shaping(
            TrueEpsOracle(z0, sched_default), replace(cfg, t_ns=1000), sched_default, steps, init
        )
        assert float(np.sqrt(np.mean((out.values - z0.values) ** 2))) < 1e-6

        # shaping locality bit-exact
        z = LatentVideo(rng.standard_normal((16, 32, 32, 3)))
        shaped = shape_latent(z, cfg, 950, fresh_eps(0, 950, z.shape), sched_default)
        unmasked = np.broadcast_to(~cfg.mask_values()[..., None], z.shape)
        assert shaped.values[unmasked].tobytes() == z.values[unmasked].tobytes()

        # pull-oracle: shaped beats unshaped for 10/10 seeds at t_ns=900
        steps = default_step_list(test_sched, 50)
        wins = 0
        for seed in range(10):
            cfg, target = _sampler_fixture(seed=seed)
            oracle = PullOracle(target, test_sched, strength=0.4)
            init = LatentVideo(np.random.default_rng((seed, 99)).standard_normal((16, 32, 32, 3)))
            shaped = sample_with_shaping(oracle, cfg, test_sched, steps, init)
            unshaped = sample_with_shaping(
                oracle, replace(cfg, t_ns=test_sched.num_steps), test_sched, steps, init
            )
            wins += masked_rmse_to_preview(shaped, cfg) < masked_rmse_to_preview(unshaped, cfg)
        assert wins == 10, f"shaping beat the baseline for only {wins}/10 seeds"

        # threshold sweep: non-increasing masked RMSE as t_ns decreases
        cfg, target = _sampler_fixture(seed=0)
        oracle = PullOracle(target, test_sched, strength=0.4)
        init = LatentVideo(np.random.default_rng((0, 99)).standard_normal((16, 32, 32, 3)))
        recs = threshold_sweep(oracle, cfg, test_sched, [1000, 900, 800, 600], steps, init)
        rmse = [r.masked_rmse for r in recs]
        assert all(a >= b for a, b in zip(rmse, rmse[1:])), rmse


def test_metrics_suite():
    with Budget("metrics", 5.0):
        rng = np.random.default_rng(53)

        def canon(poses):
            return canonicalize(Trajectory(tuple(poses), convention="camera_to_world"))

        # zero on identical trajectories
        t = canon([Pose.identity()] + [random_pose(rng) for _ in range(5)])
        pair = TrajectoryPair(gt=t, gen=t)
        assert rot_err(pair) == 0.0
        assert trans_err(pair, "relative") == 0.0
        assert trans_err(pair, "metric") == 0.0

        # rot_err = pi on a constructed 180-degree single-frame discrepancy
        flip = np.array([[-1.0, 0, 0], [0, -1.0, 0], [0, 0, 1.0]])
        gt = canon([Pose.identity(), Pose.identity()])
        gen = canon([Pose.identity(), Pose(flip, np.zeros(3))])
        assert abs(rot_err(TrajectoryPair(gt=gt, gen=gen)) - np.pi) < 1e-12

        # relative-mode scale invariance; metric-mode scale sensitivity
        gt = canon([Pose(np.eye(3), rng.standard_normal(3) * (1 if i else 0)) for i in range(5)])
        gen = canon([Pose(np.eye(3), rng.standard_normal(3) * (1 if i else 0)) for i in range(5)])
        base_rel = trans_err(TrajectoryPair(gt=gt, gen=gen), "relative")
        base_met = trans_err(TrajectoryPair(gt=gt, gen=gen), "metric")
        scaled = apply_scale(gen, 3.7)
        assert abs(trans_err(TrajectoryPair(gt=gt, gen=scaled), "relative") - base_rel) < 1e-9
        assert abs(trans_err(TrajectoryPair(gt=gt, gen=scaled), "metric") - base_met) > 1e-6

        # two-level aggregation matches the nested-mean oracle on 3x5 reports
        def rep(v):
            return MetricReport(v, v, v, v, v, 16.0, 1.0, 1.0)

        values = {f"s{i}": [float(v) for v in rng.uniform(0, 4, 5)] for i in range(3)}
        trials = {s: [rep(v) for v in vs] for s, vs in values.items()}
        got = aggregate(trials)
        expected = float(np.mean([np.mean(vs) for vs in values.values()]))
        assert abs(got.rot_err - expected) < 1e-12


def _run_cli(args, cwd):
    proc = subprocess.run(
        [sys.executable, "-m", "camscene", *args], cwd=cwd, capture_output=True, text=True
    )
    assert proc.returncode == 0, f"camscene {' '.join(args)}\n{proc.stderr}"


def test_golden_pipeline(tmp_path):
    with Budget("golden-pipeline", 120.0):
        scene = FIXTURES / "scene"
        clip = FIXTURES / "clip"
        out = tmp_path / "out"
        out.mkdir()
        _run_cli(
            [
                "reconstruct",
                "--image", str(scene / "image.png"),
                "--depth", str(scene / "depth.pfm"),
                "--intrinsics", str(scene / "intrinsics.json"),
                "--out-cloud", str(out / "cloud.ply"),
            ],
            tmp_path,
        )
        _run_cli(
            [
                "interp",
                "--keyframes", str(scene / "keyframes.json"),
                "--frames", "16",
                "--out", str(out / "traj16.json"),
            ],
            tmp_path,
        )
        _run_cli(
            [
                "preview",
                "--cloud", str(out / "cloud.ply"),
                "--traj", str(out / "traj16.json"),
                "--intrinsics", str(scene / "intrinsics.json"),
                "--out-dir", str(out / "preview"),
                "--radius", "1",
                "--kernel", "3",
                "--save-depth",
            ],
            tmp_path,
        )
        _run_cli(
            [
                "shape",
                "--preview-dir", str(out / "preview"),
                "--masks-dir", str(out / "preview"),
                "--tns", "900",
                "--steps", "20",
                "--seed", "7",
                "--denoiser", "pull",
                "--schedule", "linear_alpha_bar",
                "--out", str(out / "shaped"),
            ],
            tmp_path,
        )
        _run_cli(
            [
                "sweep",
                "--preview-dir", str(out / "preview"),
                "--masks-dir", str(out / "preview"),
                "--tns", "600,800,900,1000",
                "--steps", "20",
                "--seed", "7",
                "--denoiser", "pull",
                "--schedule", "linear_alpha_bar",
                "--out", str(out / "sweep.csv"),
            ],
            tmp_path,
        )
        _run_cli(
            [
                "eval",
                "--gt", str(out / "traj16.json"),
                "--gen", str(scene / "gen_perturbed.json"),
                "--mode", "both",
                "--out", str(out / "eval.json"),
            ],
            tmp_path,
        )
        _run_cli(
            [
                "align",
                "--colmap-dir", str(clip / "colmap"),
                "--depths-dir", str(clip / "depths"),
                "--poses", str(clip / "poses.txt"),
                "--out-report", str(out / "align.json"),
                "--out-poses", str(out / "metric_poses"),
            ],
            tmp_path,
        )

        manifest = json.loads((FIXTURES / "golden" / "manifest.json").read_text())
        produced = {
            p.relative_to(out).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(out.rglob("*"))
            if p.is_file()
        }
        assert produced == manifest, "pipeline outputs diverge from the committed golden hashes"

        # serve: the last subcommand, checked against the preview stage output
        _serve_roundtrip(tmp_path, out)


def _serve_roundtrip(tmp_path, out):
    import socket

    import httpx

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    proc = subprocess.Popen(
        [
            sys.executable, "-m", "camscene", "serve",
            "--port", str(port),
            "--data-dir", str(tmp_path / "served"),
        ],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    try:
        base = f"http://127.0.0.1:{port}"
        for _ in range(100):
            try:
                if httpx.get(base + "/healthz", timeout=1.0).status_code == 200:
                    break
            except httpx.TransportError:
                time.sleep(0.1)
        else:
            raise AssertionError("service did not come up")
        scene = FIXTURES / "scene"
        resp = httpx.post(
            base + "/scenes",
            files={
                "image": ("image.png", (scene / "image.png").read_bytes(), "image/png"),
                "depth": ("depth.pfm", (scene / "depth.pfm").read_bytes(), "application/octet-stream"),
                "intrinsics": ("k.json", (scene / "intrinsics.json").read_bytes(), "application/json"),
            },
        )
        assert resp.status_code == 200, resp.text
        scene_id = resp.json()["scene_id"]
        keys = json.loads((scene / "keyframes.json").read_text())
        resp = httpx.put(
            f"{base}/scenes/{scene_id}/trajectory",
            json={"keyframes": keys["poses"], "n_frames": 16},
        )
        assert resp.status_code == 200, resp.text
        served = httpx.get(f"{base}/scenes/{scene_id}/preview/0").content
        assert served == (out / "preview" / "color_000.png").read_bytes()
    finally:
        proc.terminate()
        proc.wait(timeout=10)
