"""Rigid-transform algebra, canonicalization, depth unprojection and SE(3) keyframe interpolation.

Conventions
-----------
* A Pose is the pair (R, T) acting on column vectors as x' = R x + T.
* world_to_camera (w2c) maps world points into a camera frame; camera_to_world
  (c2w) is its inverse.
* Pixel (u, v) means column u, row v, addressed at integer coordinates
  (no half-pixel center offset); all intrinsics are kept in pixel units
  internally, normalized intrinsics are converted once at ingestion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AmbiguousRotationError,
    InvalidIntrinsicsError,
    InvalidPoseError,
    InvalidScaleError,
    InvalidTrajectoryError,
    ShapeMismatchError,
)
from .rasters import DepthRaster, PointCloud, _frozen

ORTHONORMALITY_TOL = 1e-9
# Rotations are re-projected onto SO(3) after composition chains longer than
# this, bounding drift in long trajectories.
_POLAR_CHAIN_LIMIT = 16

W2C = "world_to_camera"
C2W = "camera_to_world"
RELATIVE = "relative"
METRIC = "metric"


def orthonormality_defect(rotation: np.ndarray) -> float:
    """Frobenius distance of R^T R from the identity."""
    r = np.asarray(rotation, dtype=np.float64)
    return float(np.linalg.norm(r.T @ r - np.eye(3)))


def nearest_rotation(m: np.ndarray) -> np.ndarray:
    """Polar projection of a 3x3 matrix onto SO(3)."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=np.float64))
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


@dataclass(frozen=True)
class Pose:
    """Rigid transform: 3x3 rotation plus translation vector.

    translation is in meters when the owning trajectory is metric-scale,
    unitless otherwise. chain counts how many compositions produced this
    pose since the last re-orthonormalization.
    """

    rotation: np.ndarray
    translation: np.ndarray
    chain: int = field(default=0, compare=False, repr=False)

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(-1)
        if r.shape != (3, 3):
            raise InvalidPoseError(f"rotation must be 3x3, got {r.shape}")
        if t.shape != (3,):
            raise InvalidPoseError(f"translation must be a 3-vector, got {t.shape}")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvalidPoseError("pose contains non-finite values")
        defect = orthonormality_defect(r)
        if defect > ORTHONORMALITY_TOL:
            raise InvalidPoseError(f"rotation is not orthonormal (defect {defect:.3e})")
        det = float(np.linalg.det(r))
        if abs(det - 1.0) > ORTHONORMALITY_TOL:
            raise InvalidPoseError(f"rotation determinant {det} != 1 (reflection?)")
        object.__setattr__(self, "rotation", _frozen(r))
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix."""
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an Nx3 (or length-3) array of points."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self o other)(x) = self(other(x))."""
        r = self.rotation @ other.rotation
        t = self.rotation @ other.translation + self.translation
        chain = max(self.chain, other.chain) + 1
        if chain > _POLAR_CHAIN_LIMIT:
            r = nearest_rotation(r)
            chain = 0
        return Pose(r, t, chain=chain)

    def is_identity(self, tol: float = ORTHONORMALITY_TOL) -> bool:
        return (
            float(np.linalg.norm(self.rotation - np.eye(3))) <= tol
            and float(np.linalg.norm(self.translation)) <= tol
        )


def invert_pose(p: Pose) -> Pose:
    """Inverse rigid transform: (R, T) -> (R^T, -R^T T)."""
    rt = p.rotation.T
    return Pose(rt, -(rt @ p.translation), chain=p.chain)


@dataclass(frozen=True)
class Trajectory:
    """Ordered camera poses with convention and scale-space tags.

    canonical is derived, not supplied: it is true iff poses[0] is the
    identity (within the pose orthonormality tolerance).
    """

    poses: tuple
    convention: str
    scale_space: str = RELATIVE
    frame_indices: tuple | None = None
    canonical: bool = field(init=False)

    def __post_init__(self):
        poses = tuple(self.poses)
        if len(poses) < 1:
            raise InvalidTrajectoryError("trajectory must contain at least one pose")
        if not all(isinstance(p, Pose) for p in poses):
            raise InvalidTrajectoryError("trajectory entries must be Pose instances")
        if self.convention not in (W2C, C2W):
            raise InvalidTrajectoryError(f"unknown convention {self.convention!r}")
        if self.scale_space not in (RELATIVE, METRIC):
            raise InvalidTrajectoryError(f"unknown scale_space {self.scale_space!r}")
        if self.frame_indices is not None:
            idx = tuple(int(i) for i in self.frame_indices)
            if len(idx) != len(poses):
                raise InvalidTrajectoryError("frame_indices length must match pose count")
            object.__setattr__(self, "frame_indices", idx)
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "canonical", poses[0].is_identity())

    def __len__(self) -> int:
        return len(self.poses)

    def frame_index(self, i: int) -> int:
        return self.frame_indices[i] if self.frame_indices is not None else i


def invert_trajectory(t: Trajectory) -> Trajectory:
    """Flip between w2c and c2w by inverting every pose."""
    flipped = C2W if t.convention == W2C else W2C
    return Trajectory(
        tuple(invert_pose(p) for p in t.poses),
        convention=flipped,
        scale_space=t.scale_space,
        frame_indices=t.frame_indices,
    )


def canonicalize(t: Trajectory) -> Trajectory:
    """Re-express a camera-to-world trajectory relative to its first frame.

    pose[i] becomes inverse(pose[0]) o pose[i]; pose[0] becomes the exact
    identity. Idempotent: a second application reproduces the same poses.
    """
    if t.convention != C2W:
        raise InvalidTrajectoryError(
            "canonicalize expects a camera_to_world trajectory; convert with invert_trajectory first"
        )
    base = invert_pose(t.poses[0])
    poses = [Pose.identity()]
    poses.extend(base.compose(p) for p in t.poses[1:])
    return Trajectory(
        tuple(poses),
        convention=C2W,
        scale_space=t.scale_space,
        frame_indices=t.frame_indices,
    )


def apply_scale(t: Trajectory, alpha: float) -> Trajectory:
    """Scale every translation by alpha, leaving rotations untouched; output is metric-scale."""
    alpha = float(alpha)
    if not np.isfinite(alpha) or alpha <= 0.0:
        raise InvalidScaleError(f"scale factor must be finite and > 0, got {alpha}")
    poses = tuple(
        Pose(p.rotation, p.translation * alpha, chain=p.chain) for p in t.poses
    )
    return Trajectory(poses, convention=t.convention, scale_space=METRIC, frame_indices=t.frame_indices)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics in pixel units, with the raster size they refer to."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    source_convention: str = "pixel"

    def __post_init__(self):
        if self.source_convention not in ("pixel", "normalized"):
            raise InvalidIntrinsicsError(f"unknown source_convention {self.source_convention!r}")
        if self.width < 1 or self.height < 1:
            raise InvalidIntrinsicsError("raster dimensions must be >= 1")
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidIntrinsicsError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise InvalidIntrinsicsError("principal point must lie inside the raster")

    @classmethod
    def from_normalized(cls, fx, fy, cx, cy, width, height) -> "CameraIntrinsics":
        """Ingest normalized intrinsics (fractions of image size) into pixel units."""
        return cls(
            fx=fx * width,
            fy=fy * height,
            cx=cx * width,
            cy=cy * height,
            width=int(width),
            height=int(height),
            source_convention="normalized",
        )

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def inverse_matrix(self) -> np.ndarray:
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ]
        )


def unproject(
    depth: DepthRaster,
    intrinsics: CameraIntrinsics,
    colors: np.ndarray | None = None,
) -> PointCloud:
    """Lift every valid depth pixel into the camera frame: p = D(u,v) * K^-1 * (u, v, 1)^T.

    Pixels with non-finite or non-positive depth produce no point. Each
    point records its source pixel as a linear index v * width + u.
    """
    if (depth.height, depth.width) != (intrinsics.height, intrinsics.width):
        raise ShapeMismatchError(
            f"depth raster {depth.height}x{depth.width} does not match intrinsics "
            f"{intrinsics.height}x{intrinsics.width}"
        )
    if colors is not None:
        colors = np.asarray(colors, dtype=np.float64)
        if colors.shape != (depth.height, depth.width, 3):
            raise ShapeMismatchError(f"colors must be HxWx3 matching the raster, got {colors.shape}")

    valid = depth.valid_mask
    vs, us = np.nonzero(valid)
    d = depth.values[vs, us]
    x = (us - intrinsics.cx) / intrinsics.fx * d
    y = (vs - intrinsics.cy) / intrinsics.fy * d
    positions = np.column_stack([x, y, d])
    source_pixel = vs * depth.width + us
    point_colors = colors[vs, us] if colors is not None else None
    return PointCloud(positions, point_colors, source_pixel, frame_tag="camera")


# --- quaternion helpers for keyframe interpolation -------------------------

def rotation_to_quat(r: np.ndarray) -> np.ndarray:
    """3x3 rotation to unit quaternion (w, x, y, z), w >= 0."""
    m = np.asarray(r, dtype=np.float64)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] >= m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    q = q / np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return q


def quat_to_rotation(q: np.ndarray) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=np.float64) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


_ANTIPODAL_DOT = 1e-8
_NLERP_DOT = 0.9995


def slerp(q0: np.ndarray, q1: np.ndarray, s: float) -> np.ndarray:
    """Shortest-arc spherical interpolation between unit quaternions.

    Raises AmbiguousRotationError for antipodal endpoints (relative rotation
    of 180 degrees), where the arc is not unique.
    """
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    if dot < _ANTIPODAL_DOT:
        raise AmbiguousRotationError(
            "keyframe rotations are 180 degrees apart; interpolation axis is ambiguous"
        )
    if dot > _NLERP_DOT:
        out = q0 + s * (q1 - q0)
        return out / np.linalg.norm(out)
    theta = np.arccos(min(dot, 1.0))
    st = np.sin(theta)
    return (np.sin((1.0 - s) * theta) / st) * q0 + (np.sin(s * theta) / st) * q1


def interpolate_keyframes(
    keys,
    n_frames: int,
    scale_space: str = METRIC,
) -> Trajectory:
    """Expand sparse keyframe poses into a dense camera-to-world trajectory.

    Keyframes sit at uniform parameter positions on [0, 1]; between adjacent
    keys the rotation follows shortest-arc slerp and the translation is
    linear. The first and last output poses equal the first and last keys
    exactly.
    """
    keys = list(keys)
    if len(keys) < 2:
        raise InvalidTrajectoryError("keyframe interpolation needs at least 2 keyframes")
    if n_frames < len(keys):
        raise InvalidTrajectoryError(
            f"n_frames ({n_frames}) must be >= number of keyframes ({len(keys)})"
        )
    n_keys = len(keys)
    quats = [rotation_to_quat(k.rotation) for k in keys]
    for a, b in zip(quats, quats[1:]):
        if abs(float(np.dot(a, b))) < _ANTIPODAL_DOT:
            raise AmbiguousRotationError(
                "adjacent keyframe rotations are 180 degrees apart; interpolation axis is ambiguous"
            )
    poses = []
    for i in range(n_frames):
        v = i / (n_frames - 1)
        x = v * (n_keys - 1)
        j = min(int(np.floor(x)), n_keys - 2)
        s = x - j
        if s == 0.0:
            poses.append(keys[j])
            continue
        if s == 1.0 or i == n_frames - 1:
            poses.append(keys[j + 1])
            continue
        q = slerp(quats[j], quats[j + 1], s)
        t = (1.0 - s) * keys[j].translation + s * keys[j + 1].translation
        poses.append(Pose(quat_to_rotation(q), t))
    return Trajectory(tuple(poses), convention=C2W, scale_space=scale_space)
