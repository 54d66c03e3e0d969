import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from camscene.errors import (
    AlignmentFailedError,
    NoObservationsError,
    RejectedAlignmentError,
    ValidationError,
)
from camscene.geometry import Pose, Trajectory, canonicalize, invert_trajectory
from camscene.rasters import DepthRaster
from camscene.scale_align import (
    ScaleAlignment,
    SparsePoint,
    align_clip,
    filter_clips,
    frame_factor,
    per_point_factor,
    point_depth_in_frame,
    sample_depth,
    to_metric,
)

from synth import make_clip


def rot_x(deg):
    a = np.deg2rad(deg)
    return np.array(
        [[1.0, 0.0, 0.0], [0.0, np.cos(a), -np.sin(a)], [0.0, np.sin(a), np.cos(a)]]
    )


class TestPointDepth:
    def test_identity(self):
        p = SparsePoint(id=0, xyz_world=[0, 0, 5.0], track=((0, 1.0, 1.0),))
        assert point_depth_in_frame(p, Pose.identity()) == 5.0

    def test_camera_plane(self):
        p = SparsePoint(id=0, xyz_world=[0, 0, 5.0], track=((0, 1.0, 1.0),))
        assert point_depth_in_frame(p, Pose(np.eye(3), [0, 0, -5.0])) == 0.0

    def test_against_homogeneous_transform_oracle(self):
        p = SparsePoint(id=0, xyz_world=[1.0, 2.0, 3.0], track=((0, 1.0, 1.0),))
        pose = Pose(rot_x(90.0), [0.0, 1.0, 0.0])
        expected = (pose.matrix() @ np.array([1.0, 2.0, 3.0, 1.0]))[2]
        assert point_depth_in_frame(p, pose) == pytest.approx(expected, abs=1e-12)


class TestPerPointFactor:
    def test_ratio(self):
        assert per_point_factor(4.0, 2.0) == 2.0

    @pytest.mark.parametrize("x", [0.1, 1.0, 17.3])
    def test_identity_ratio(self, x):
        assert per_point_factor(x, x) == 1.0

    def test_constructed_scene_factor_three(self, rng):
        points, depths, k, traj = make_clip(rng, alpha=3.0)
        a = align_clip(points, depths, k, traj)
        for factors in a.per_frame_factors.values():
            assert np.allclose(factors, 3.0, rtol=1e-12)

    @pytest.mark.parametrize(
        "dm,ds", [(1.0, 0.0), (1.0, 1e-7), (1.0, -2.0), (np.nan, 1.0), (1.0, np.inf), (0.0, 1.0)]
    )
    def test_skip_signals(self, dm, ds):
        assert per_point_factor(dm, ds) is None


class TestFrameFactor:
    def test_odd_median(self):
        assert frame_factor([1.0, 2.0, 9.0]) == 2.0

    def test_even_mean_of_middles(self):
        assert frame_factor([1.0, 3.0]) == 2.0

    def test_101_samples_against_sort_oracle(self, rng):
        xs = rng.uniform(0.1, 10.0, size=101)
        expected = sorted(xs)[50]  # sort-and-index oracle, odd count
        assert frame_factor(xs) == expected

    def test_even_count_against_sort_oracle(self, rng):
        xs = list(rng.uniform(0.1, 10.0, size=40))
        s = sorted(xs)
        assert frame_factor(xs) == pytest.approx((s[19] + s[20]) / 2, rel=1e-15)

    def test_empty(self):
        with pytest.raises(NoObservationsError):
            frame_factor([])

    @given(
        st.lists(st.floats(0.01, 100.0), min_size=3, max_size=31),
        st.floats(1e3, 1e9),
    )
    @settings(max_examples=60, deadline=None)
    def test_median_robust_to_minority_corruption(self, values, blowup):
        # corrupt strictly fewer than half; median stays inside clean hull
        n_corrupt = (len(values) - 1) // 2
        corrupted = [v * blowup for v in values[:n_corrupt]] + values[n_corrupt:]
        med = frame_factor(corrupted)
        assert min(values[n_corrupt:]) <= med <= max(corrupted)
        clean = values[n_corrupt:]
        if n_corrupt < len(clean):  # strictly-minority corruption
            assert med <= max(clean) * blowup
            assert min(clean) <= med


class TestSampleDepth:
    def test_interior_bilinear(self):
        r = DepthRaster(np.arange(25, dtype=float).reshape(5, 5) + 1.0)
        # hand bilinear at (2.5, 2.5): corners 13,14,18,19 -> mean 16
        assert sample_depth(r, 2.5, 2.5) == pytest.approx(16.0)

    def test_border_nearest(self):
        r = DepthRaster(np.arange(25, dtype=float).reshape(5, 5) + 1.0)
        assert sample_depth(r, 0.3, 0.4) == 1.0  # nearest (0, 0)
        assert sample_depth(r, 4.4, 4.4) == 25.0  # clamped nearest (4, 4)

    def test_invalid_corner_skips(self):
        vals = np.ones((5, 5))
        vals[2, 3] = 0.0
        r = DepthRaster(vals)
        assert sample_depth(r, 2.5, 2.2) is None
        assert sample_depth(r, 1.2, 1.2) == 1.0

    def test_border_invalid_skips(self):
        vals = np.ones((5, 5))
        vals[0, 0] = -1.0
        assert sample_depth(DepthRaster(vals), 0.2, 0.2) is None


class TestAlignClip:
    def test_exact_alpha_two(self, rng):
        points, depths, k, traj = make_clip(rng, alpha=2.0)
        a = align_clip(points, depths, k, traj)
        assert a.clip_alpha == pytest.approx(2.0, rel=1e-12)
        assert a.max_frame_factor == pytest.approx(2.0, rel=1e-12)
        assert a.min_frame_factor == pytest.approx(2.0, rel=1e-12)

    def test_corruption_robust(self, rng):
        points, depths, k, traj = make_clip(
            rng, alpha=2.0, points_per_frame=21, corrupt_fraction=0.1
        )
        a = align_clip(points, depths, k, traj, max_depth=np.inf)
        assert a.clip_alpha == pytest.approx(2.0, rel=1e-9)

    def test_singleton(self):
        k_int = 4
        from camscene.geometry import CameraIntrinsics

        k = CameraIntrinsics(fx=2.0, fy=2.0, cx=2.0, cy=2.0, width=k_int, height=k_int)
        # point at depth 5 under identity pose, observed at the principal point
        p = SparsePoint(id=0, xyz_world=[0.0, 0.0, 5.0], track=((0, 2.0, 2.0),))
        raster = np.ones((4, 4))
        raster[2, 2] = 5.0
        traj = Trajectory((Pose.identity(),), convention="world_to_camera")
        a = align_clip([p], {0: DepthRaster(raster)}, k, traj)
        assert a.clip_alpha == 1.0
        assert a.max_frame_factor == 1.0 and a.min_frame_factor == 1.0

    def test_deep_samples_discarded(self, rng):
        points, depths, k, traj = make_clip(rng, alpha=50.0)  # all metric depths > 20
        with pytest.raises(AlignmentFailedError):
            align_clip(points, depths, k, traj)
        a = align_clip(points, depths, k, traj, max_depth=np.inf)
        assert a.clip_alpha == pytest.approx(50.0, rel=1e-12)

    def test_missing_pose_raises(self, rng):
        points, depths, k, traj = make_clip(rng, alpha=1.0, n_frames=3)
        short = Trajectory(traj.poses[:2], convention="world_to_camera")
        with pytest.raises(ValidationError):
            align_clip(points, depths, k, short)

    def test_scale_equivariance(self, rng):
        points, depths, k, traj = make_clip(rng, alpha=2.0)
        a1 = align_clip(points, depths, k, traj)

        c = 4.0
        scaled_points = [
            SparsePoint(id=p.id, xyz_world=p.xyz_world * c, track=p.track) for p in points
        ]
        scaled_traj = Trajectory(
            tuple(Pose(p.rotation, p.translation * c) for p in traj.poses),
            convention="world_to_camera",
        )
        a2 = align_clip(scaled_points, depths, k, scaled_traj)
        assert a2.clip_alpha == pytest.approx(a1.clip_alpha / c, rel=1e-9)

        # end-to-end metric trajectories agree despite the SfM gauge change
        m1 = to_metric(canonicalize(invert_trajectory(traj)), a1)
        m2 = to_metric(canonicalize(invert_trajectory(scaled_traj)), a2)
        for p1, p2 in zip(m1.poses, m2.poses):
            assert np.allclose(p1.translation, p2.translation, atol=1e-9)


def make_alignment(i, max_f, min_f):
    return ScaleAlignment(
        clip_id=f"clip{i:03d}",
        per_frame_factors={0: (min_f,), 1: (max_f,)},
        frame_medians={0: min_f, 1: max_f},
        clip_alpha=(min_f + max_f) / 2,
        max_frame_factor=max_f,
        min_frame_factor=min_f,
    )


class TestFilterClips:
    def test_q_zero_accepts_all(self):
        clips = [make_alignment(i, float(i + 2), 1.0) for i in range(10)]
        assert all(a.accepted for a in filter_clips(clips, q=0.0))

    def test_rank_enumeration_100_clips(self):
        # distinct max factors 1..100 in index order, identical min factors
        clips = [make_alignment(i, float(i + 1), 0.5) for i in range(100)]
        out = filter_clips(clips, q=0.02)
        rejected = [i for i, a in enumerate(out) if not a.accepted]
        assert rejected == [0, 1, 98, 99]  # ranks 1, 2, 99, 100 by max factor
        assert sum(a.accepted for a in out) == 96
        assert [a.clip_id for a in out] == [c.clip_id for c in clips]  # order kept

    def test_min_pass_rejection_alone(self):
        # 50 clips, identical max factors; min factors distinct ascending
        clips = [make_alignment(i, 100.0, float(i + 1)) for i in range(50)]
        out = filter_clips(clips, q=0.02)
        rejected = [i for i, a in enumerate(out) if not a.accepted]
        assert rejected == [0, 49]
        assert "min_frame_factor" in out[0].rejection_reason
        assert out[0].accepted is False

    def test_union_of_rejections(self):
        # max factors ascend with index, min factors descend: the two passes
        # reject different rank ends that map to the same index set
        clips = [make_alignment(i, float(i + 1), (100.0 - i) / 1000.0) for i in range(100)]
        out = filter_clips(clips, q=0.02)
        rejected = {i for i, a in enumerate(out) if not a.accepted}
        assert rejected == {0, 1, 98, 99}
        assert "high_max_frame_factor" in out[99].rejection_reason
        assert "low_min_frame_factor" in out[99].rejection_reason

    def test_reject_count_bound(self, rng):
        clips = [
            make_alignment(i, float(rng.uniform(1, 10)), float(rng.uniform(0.1, 1)))
            for i in range(37)
        ]
        out = filter_clips(clips, q=0.02)
        n_rej = sum(not a.accepted for a in out)
        assert n_rej <= 4 * int(np.floor(0.02 * 37))

    def test_empty(self):
        assert filter_clips([], q=0.02) == []

    def test_bad_quantile(self):
        with pytest.raises(ValidationError):
            filter_clips([], q=0.5)


class TestToMetric:
    def test_rejected_refused(self, rng):
        from dataclasses import replace

        points, depths, k, traj = make_clip(rng, alpha=2.0)
        a = align_clip(points, depths, k, traj)
        rejected = replace(a, accepted=False, rejection_reason="high_max_frame_factor")
        with pytest.raises(RejectedAlignmentError):
            to_metric(canonicalize(invert_trajectory(traj)), rejected)

    def test_scales_translations(self, rng):
        points, depths, k, traj = make_clip(rng, alpha=2.0)
        a = align_clip(points, depths, k, traj)
        c2w = canonicalize(invert_trajectory(traj))
        m = to_metric(c2w, a)
        assert m.scale_space == "metric"
        for mp, rp in zip(m.poses, c2w.poses):
            assert np.allclose(mp.translation, rp.translation * a.clip_alpha, atol=1e-12)
