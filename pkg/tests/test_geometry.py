import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from camscene.errors import (
    AmbiguousRotationError,
    InvalidIntrinsicsError,
    InvalidPoseError,
    InvalidScaleError,
    InvalidTrajectoryError,
    ShapeMismatchError,
)
from camscene.geometry import (
    CameraIntrinsics,
    Pose,
    Trajectory,
    apply_scale,
    canonicalize,
    interpolate_keyframes,
    invert_pose,
    invert_trajectory,
    unproject,
)
from camscene.rasters import DepthRaster

from conftest import random_pose, random_rotation


def rot_z(deg: float) -> np.ndarray:
    a = np.deg2rad(deg)
    return np.array(
        [[np.cos(a), -np.sin(a), 0.0], [np.sin(a), np.cos(a), 0.0], [0.0, 0.0, 1.0]]
    )


# --- Pose and inversion -------------------------------------------------------


class TestPose:
    def test_rejects_non_orthonormal(self):
        with pytest.raises(InvalidPoseError):
            Pose(np.eye(3) * 1.1, np.zeros(3))

    def test_rejects_reflection(self):
        m = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(InvalidPoseError):
            Pose(m, np.zeros(3))

    def test_rejects_bad_shapes(self):
        with pytest.raises(InvalidPoseError):
            Pose(np.eye(4), np.zeros(3))
        with pytest.raises(InvalidPoseError):
            Pose(np.eye(3), np.zeros(2))

    def test_immutable_arrays(self):
        p = random_pose(np.random.default_rng(0))
        with pytest.raises(ValueError):
            p.rotation[0, 0] = 2.0


class TestInvertPose:
    def test_identity(self):
        assert invert_pose(Pose.identity()).is_identity(0.0)

    def test_pure_translation(self):
        inv = invert_pose(Pose(np.eye(3), [1.0, 2.0, 3.0]))
        assert np.array_equal(inv.rotation, np.eye(3))
        assert np.array_equal(inv.translation, [-1.0, -2.0, -3.0])

    def test_rotz90_against_homogeneous_inverse_oracle(self):
        p = Pose(rot_z(90.0), [1.0, 0.0, 0.0])
        expected = np.linalg.inv(p.matrix())  # generic 4x4 oracle
        inv = invert_pose(p)
        assert np.allclose(inv.matrix(), expected, atol=1e-12)
        # frozen values from the oracle: R^T = rot_z(-90), T' = (0, 1, 0)
        assert np.allclose(inv.rotation, rot_z(-90.0), atol=1e-12)
        assert np.allclose(inv.translation, [0.0, 1.0, 0.0], atol=1e-12)

    def test_compose_with_inverse_is_identity(self, rng):
        for _ in range(20):
            p = random_pose(rng)
            assert p.compose(invert_pose(p)).is_identity(1e-9)
            assert invert_pose(p).compose(p).is_identity(1e-9)

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=50, deadline=None)
    def test_involution(self, seed):
        p = random_pose(np.random.default_rng(seed))
        q = invert_pose(invert_pose(p))
        assert np.linalg.norm(q.rotation - p.rotation) < 1e-9
        assert np.linalg.norm(q.translation - p.translation) < 1e-9


class TestCompose:
    def test_matches_matrix_product_oracle(self, rng):
        for _ in range(10):
            a, b = random_pose(rng), random_pose(rng)
            assert np.allclose(a.compose(b).matrix(), a.matrix() @ b.matrix(), atol=1e-12)

    def test_long_chain_stays_orthonormal(self, rng):
        p = Pose.identity()
        for _ in range(200):
            p = p.compose(random_pose(rng))
        # constructor enforces the 1e-9 defect bound; reaching here is the assertion
        assert p.chain <= 16


# --- canonicalize ---------------------------------------------------------------


class TestCanonicalize:
    def test_already_canonical_unchanged(self, rng):
        t = Trajectory(
            (Pose.identity(), random_pose(rng)), convention="camera_to_world"
        )
        out = canonicalize(t)
        assert out.canonical
        for a, b in zip(out.poses, t.poses):
            assert np.allclose(a.matrix(), b.matrix(), atol=1e-12)

    def test_constant_trajectory_collapses_to_identity(self, rng):
        p = random_pose(rng)
        out = canonicalize(Trajectory((p, p), convention="camera_to_world"))
        for pose in out.poses:
            assert pose.is_identity(1e-9)

    def test_three_frames_against_matrix_oracle(self, rng):
        poses = tuple(random_pose(rng) for _ in range(3))
        t = Trajectory(poses, convention="camera_to_world")
        out = canonicalize(t)
        inv0 = np.linalg.inv(poses[0].matrix())
        for got, src in zip(out.poses, poses):
            assert np.allclose(got.matrix(), inv0 @ src.matrix(), atol=1e-9)

    def test_idempotent(self, rng):
        t = Trajectory(tuple(random_pose(rng) for _ in range(4)), convention="camera_to_world")
        once = canonicalize(t)
        twice = canonicalize(once)
        for a, b in zip(once.poses, twice.poses):
            assert np.linalg.norm(a.matrix() - b.matrix()) < 1e-12

    def test_rejects_w2c(self, rng):
        t = Trajectory((random_pose(rng),), convention="world_to_camera")
        with pytest.raises(InvalidTrajectoryError):
            canonicalize(t)
        assert canonicalize(invert_trajectory(t)).canonical

    def test_empty_rejected_at_construction(self):
        with pytest.raises(InvalidTrajectoryError):
            Trajectory((), convention="camera_to_world")


# --- unproject ----------------------------------------------------------------------


def make_intrinsics(fx=2.0, fy=2.0, cx=2.0, cy=2.0, width=4, height=4):
    return CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=width, height=height)


class TestUnproject:
    def test_principal_point(self):
        k = make_intrinsics()
        depth = np.zeros((4, 4))
        depth[2, 2] = 2.0  # pixel (u=cx, v=cy)
        cloud = unproject(DepthRaster(depth), k)
        assert len(cloud) == 1
        assert np.allclose(cloud.positions[0], [0.0, 0.0, 2.0])

    def test_one_focal_length_offset(self):
        k = CameraIntrinsics(fx=2.0, fy=2.0, cx=1.0, cy=1.0, width=4, height=4)
        depth = np.zeros((4, 4))
        depth[1, 3] = 3.0  # u = cx + fx = 3, v = cy
        cloud = unproject(DepthRaster(depth), k)
        assert np.allclose(cloud.positions[0], [3.0, 0.0, 3.0])

    def test_full_raster_against_formula_oracle(self):
        k = make_intrinsics()
        depth = DepthRaster(np.ones((4, 4)))
        cloud = unproject(depth, k)
        assert len(cloud) == 16
        kinv = np.linalg.inv(k.matrix())
        by_pixel = {int(s): p for s, p in zip(cloud.source_pixel, cloud.positions)}
        for v in range(4):
            for u in range(4):
                expected = 1.0 * kinv @ np.array([u, v, 1.0])
                assert np.allclose(by_pixel[v * 4 + u], expected, atol=1e-12)

    def test_invalid_depths_skipped(self):
        k = make_intrinsics()
        depth = np.ones((4, 4))
        depth[0, 0] = 0.0
        depth[1, 1] = -1.0
        depth[2, 2] = np.nan
        depth[3, 3] = np.inf
        cloud = unproject(DepthRaster(depth), k)
        assert len(cloud) == 12

    def test_colors_carried(self):
        k = make_intrinsics()
        colors = np.random.default_rng(0).random((4, 4, 3))
        cloud = unproject(DepthRaster(np.ones((4, 4))), k, colors)
        v, u = 1, 3
        i = np.nonzero(cloud.source_pixel == v * 4 + u)[0][0]
        assert np.array_equal(cloud.colors[i], colors[v, u])

    def test_dim_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            unproject(DepthRaster(np.ones((3, 4))), make_intrinsics())


class TestIntrinsics:
    def test_normalized_conversion(self):
        k = CameraIntrinsics.from_normalized(0.5, 0.889, 0.5, 0.5, 640, 360)
        assert k.fx == 0.5 * 640
        assert k.fy == pytest.approx(0.889 * 360)
        assert (k.cx, k.cy) == (320.0, 180.0)
        assert k.source_convention == "normalized"

    def test_invariants(self):
        with pytest.raises(InvalidIntrinsicsError):
            CameraIntrinsics(fx=-1, fy=1, cx=0, cy=0, width=4, height=4)
        with pytest.raises(InvalidIntrinsicsError):
            CameraIntrinsics(fx=1, fy=1, cx=4, cy=0, width=4, height=4)
        with pytest.raises(InvalidIntrinsicsError):
            CameraIntrinsics(fx=1, fy=1, cx=0, cy=0, width=0, height=4)


# --- apply_scale -------------------------------------------------------------------


class TestApplyScale:
    def test_identity_scale(self, rng):
        t = Trajectory((Pose.identity(), random_pose(rng)), convention="camera_to_world")
        out = apply_scale(t, 1.0)
        assert out.scale_space == "metric"
        for a, b in zip(out.poses, t.poses):
            assert np.array_equal(a.translation, b.translation)

    def test_componentwise(self):
        t = Trajectory(
            (Pose.identity(), Pose(np.eye(3), [1.0, 0.0, 0.0])),
            convention="camera_to_world",
        )
        out = apply_scale(t, 2.5)
        assert np.array_equal(out.poses[1].translation, [2.5, 0.0, 0.0])

    def test_roundtrip(self, rng):
        t = Trajectory(tuple(random_pose(rng) for _ in range(3)), convention="camera_to_world")
        back = apply_scale(apply_scale(t, 2.0), 0.5)
        for a, b in zip(back.poses, t.poses):
            assert np.linalg.norm(a.translation - b.translation) < 1e-12

    def test_rotations_bit_identical(self, rng):
        t = Trajectory(tuple(random_pose(rng) for _ in range(3)), convention="camera_to_world")
        out = apply_scale(t, 3.7)
        for a, b in zip(out.poses, t.poses):
            assert a.rotation.tobytes() == b.rotation.tobytes()

    @pytest.mark.parametrize("alpha", [0.0, -1.0, np.nan, np.inf])
    def test_invalid_scale(self, alpha, rng):
        t = Trajectory((random_pose(rng),), convention="camera_to_world")
        with pytest.raises(InvalidScaleError):
            apply_scale(t, alpha)


# --- keyframe interpolation -------------------------------------------------------


class TestInterpolateKeyframes:
    def test_constant_path(self):
        out = interpolate_keyframes([Pose.identity(), Pose.identity()], 5)
        assert len(out) == 5
        for p in out.poses:
            assert p.is_identity(0.0)

    def test_translation_midpoint(self):
        keys = [Pose(np.eye(3), [0, 0, 0]), Pose(np.eye(3), [0, 0, 2.0])]
        out = interpolate_keyframes(keys, 3)
        assert np.allclose(out.poses[1].translation, [0, 0, 1.0], atol=1e-15)

    def test_rotation_halving_against_axis_angle_oracle(self):
        keys = [Pose.identity(), Pose(rot_z(90.0), np.zeros(3))]
        out = interpolate_keyframes(keys, 3)
        mid = out.poses[1].rotation
        # axis-angle oracle: half of rot_z(90) is rot_z(45)
        oracle = Rotation.from_rotvec([0, 0, np.deg2rad(45.0)]).as_matrix()
        assert np.allclose(mid, oracle, atol=1e-12)
        assert np.allclose(mid, rot_z(45.0), atol=1e-12)

    def test_generic_segment_against_scipy_slerp_oracle(self, rng):
        r0, r1 = random_rotation(rng), random_rotation(rng)
        keys = [Pose(r0, rng.standard_normal(3)), Pose(r1, rng.standard_normal(3))]
        out = interpolate_keyframes(keys, 9)
        from scipy.spatial.transform import Slerp

        oracle = Slerp([0.0, 1.0], Rotation.from_matrix([r0, r1]))
        for i, p in enumerate(out.poses):
            s = i / 8
            assert np.allclose(p.rotation, oracle(s).as_matrix(), atol=1e-9)
            expected_t = (1 - s) * keys[0].translation + s * keys[1].translation
            assert np.allclose(p.translation, expected_t, atol=1e-12)

    def test_endpoints_exact(self, rng):
        keys = [random_pose(rng) for _ in range(3)]
        out = interpolate_keyframes(keys, 7)
        assert out.poses[0] is keys[0]
        assert out.poses[-1] is keys[2]
        # keyframes at uniform positions: frame 3 of 7 is the middle key
        assert out.poses[3] is keys[1]

    def test_all_outputs_orthonormal(self, rng):
        keys = [random_pose(rng) for _ in range(4)]
        out = interpolate_keyframes(keys, 16)
        for p in out.poses:
            assert np.linalg.norm(p.rotation.T @ p.rotation - np.eye(3)) < 1e-9
            assert abs(np.linalg.det(p.rotation) - 1) < 1e-9

    def test_too_few_keys(self):
        with pytest.raises(InvalidTrajectoryError):
            interpolate_keyframes([Pose.identity()], 5)

    def test_n_frames_below_keys(self):
        with pytest.raises(InvalidTrajectoryError):
            interpolate_keyframes([Pose.identity(), Pose.identity()], 1)

    def test_antipodal_rotations_ambiguous(self):
        keys = [Pose.identity(), Pose(rot_z(180.0), np.zeros(3))]
        with pytest.raises(AmbiguousRotationError):
            interpolate_keyframes(keys, 3)


# --- unproject/project round trip lives in test_renderer (needs project_point) -----


@given(st.integers(min_value=0, max_value=10_000))
@settings(max_examples=40, deadline=None)
def test_slerp_outputs_valid_rotations(seed):
    rng = np.random.default_rng(seed)
    keys = [random_pose(rng), random_pose(rng)]
    try:
        out = interpolate_keyframes(keys, 6)
    except AmbiguousRotationError:
        return
    for p in out.poses:
        assert np.linalg.norm(p.rotation.T @ p.rotation - np.eye(3)) < 1e-9
